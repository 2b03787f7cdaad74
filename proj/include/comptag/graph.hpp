#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace comptag {

enum class Relation { BroaderNarrower, PartOf, PrerequisiteOf };

std::string_view to_string(Relation r) noexcept;
Relation relation_from_string(std::string_view s);
inline bool is_hierarchy(Relation r) noexcept { return r != Relation::PrerequisiteOf; }

struct CompetencyNode {
  std::string competency_id;
  std::string label_fr;
  std::optional<std::string> label_en;
  std::string description;
  std::vector<std::string> aliases;
  std::vector<std::string> examples;
};

/// Hierarchy edges point child -> parent. A prerequisite edge p -> c reads
/// "p is a prerequisite of c".
struct CompetencyEdge {
  std::string source;
  std::string target;
  Relation relation = Relation::PrerequisiteOf;
};

struct CompetencyProfile {
  std::string competency_id;
  std::string profile_text;
};

struct Violation {
  enum class Kind { HierarchyCycle, PrerequisiteCycle };
  Kind kind;
  std::vector<std::string> members;  // nodes of one strongly connected component
};

using IdSet = std::set<std::string>;

/// Immutable after construction; all queries are const.
class CompetencyGraph {
 public:
  CompetencyGraph(std::vector<CompetencyNode> nodes, std::vector<CompetencyEdge> edges);

  static CompetencyGraph from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  const std::vector<CompetencyNode>& nodes() const noexcept { return nodes_; }
  const std::vector<CompetencyEdge>& edges() const noexcept { return edges_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(std::string_view id) const;
  const CompetencyNode& node(std::string_view id) const;
  std::vector<std::string> ids() const;

  IdSet ancestors(std::string_view id) const;
  IdSet descendants(std::string_view id) const;
  /// Direct and transitive prerequisite sources.
  IdSet prerequisites_of(std::string_view id) const;
  IdSet direct_prerequisites(std::string_view id) const;
  IdSet parents(std::string_view id) const;
  IdSet children(std::string_view id) const;

 private:
  std::size_t index(std::string_view id) const;
  IdSet closure(std::size_t start, const std::vector<std::vector<std::size_t>>& adj) const;
  IdSet neighbours(std::string_view id, const std::vector<std::vector<std::size_t>>& adj) const;

  std::vector<CompetencyNode> nodes_;
  std::vector<CompetencyEdge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::vector<std::size_t>> prereq_in_;   // sources p of p -> c
  friend std::vector<Violation> validate_hierarchy(const CompetencyGraph& g);
};

CompetencyGraph load_graph(const std::filesystem::path& path);

/// Cycles in the hierarchy subgraph and in the prerequisite subgraph.
std::vector<Violation> validate_hierarchy(const CompetencyGraph& g);

/// Throws HierarchyCycle when validate_hierarchy reports anything.
void require_acyclic(const CompetencyGraph& g);

/// Profile text, one field per line. Node fields come first, then the
/// labels of one-hop neighbours (parents before children before prerequisites).
CompetencyProfile build_profile(const CompetencyGraph& g, std::string_view id);
std::vector<CompetencyProfile> build_profiles(const CompetencyGraph& g);

}  // namespace comptag
