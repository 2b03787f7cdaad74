#include "comptag/graph.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <tuple>

#include "comptag/error.hpp"
#include "comptag/io.hpp"
#include "comptag/text.hpp"

namespace comptag {

using nlohmann::json;

std::string_view to_string(Relation r) noexcept {
  switch (r) {
    case Relation::BroaderNarrower: return "broader_narrower";
    case Relation::PartOf: return "part_of";
    case Relation::PrerequisiteOf: return "prerequisite_of";
  }
  return "prerequisite_of";
}

Relation relation_from_string(std::string_view s) {
  if (s == "broader_narrower") return Relation::BroaderNarrower;
  if (s == "part_of") return Relation::PartOf;
  if (s == "prerequisite_of") return Relation::PrerequisiteOf;
  throw Error(ErrorCode::MalformedRecord, "unknown relation '" + std::string(s) + "'");
}

namespace {

std::vector<std::string> dedup_aliases(const std::vector<std::string>& aliases) {
  std::vector<std::string> out;
  std::set<std::u32string> seen;
  for (const auto& a : aliases) {
    if (a.empty()) continue;
    if (seen.insert(text::fold(text::decode_utf8(a))).second) out.push_back(a);
  }
  return out;
}

}  // namespace

CompetencyGraph::CompetencyGraph(std::vector<CompetencyNode> nodes,
                                 std::vector<CompetencyEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (n.competency_id.empty()) {
      throw Error(ErrorCode::MalformedRecord, "node " + std::to_string(i) + " has empty competency_id");
    }
    if (n.label_fr.empty()) {
      throw Error(ErrorCode::MalformedRecord, "node '" + n.competency_id + "' has empty label_fr");
    }
    if (!index_.emplace(n.competency_id, i).second) {
      throw Error(ErrorCode::MalformedRecord, "duplicate competency_id '" + n.competency_id + "'");
    }
    n.aliases = dedup_aliases(n.aliases);
  }
  parents_.resize(nodes_.size());
  children_.resize(nodes_.size());
  prereq_in_.resize(nodes_.size());
  std::set<std::tuple<std::string, std::string, Relation>> seen;
  for (const auto& e : edges_) {
    const std::string where = "edge " + e.source + " -> " + e.target + " (" +
                              std::string(to_string(e.relation)) + ")";
    if (!contains(e.source) || !contains(e.target)) {
      throw Error(ErrorCode::UnknownEndpoint, where + ": unknown endpoint");
    }
    if (e.source == e.target) throw Error(ErrorCode::SelfLoop, where + ": self loop");
    if (!seen.emplace(e.source, e.target, e.relation).second) {
      throw Error(ErrorCode::DuplicateEdge, where + ": duplicate edge");
    }
    const auto s = index(e.source);
    const auto t = index(e.target);
    if (is_hierarchy(e.relation)) {
      parents_[s].push_back(t);
      children_[t].push_back(s);
    } else {
      prereq_in_[t].push_back(s);
    }
  }
}

CompetencyGraph CompetencyGraph::from_json(const json& j) {
  try {
    std::vector<CompetencyNode> nodes;
    for (const auto& jn : j.at("nodes")) {
      CompetencyNode n;
      n.competency_id = jn.at("competency_id").get<std::string>();
      n.label_fr = jn.at("label_fr").get<std::string>();
      if (auto it = jn.find("label_en"); it != jn.end() && !it->is_null()) {
        n.label_en = it->get<std::string>();
      }
      n.description = jn.value("description", std::string{});
      n.aliases = jn.value("aliases", std::vector<std::string>{});
      n.examples = jn.value("examples", std::vector<std::string>{});
      nodes.push_back(std::move(n));
    }
    std::vector<CompetencyEdge> edges;
    if (auto it = j.find("edges"); it != j.end()) {
      for (const auto& je : *it) {
        edges.push_back({je.at("source").get<std::string>(), je.at("target").get<std::string>(),
                         relation_from_string(je.at("relation").get<std::string>())});
      }
    }
    return CompetencyGraph(std::move(nodes), std::move(edges));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad graph file: ") + e.what());
  }
}

json CompetencyGraph::to_json() const {
  json jn = json::array();
  for (const auto& n : nodes_) {
    json o = {{"competency_id", n.competency_id}, {"label_fr", n.label_fr}};
    o["label_en"] = n.label_en ? json(*n.label_en) : json(nullptr);
    o["description"] = n.description;
    o["aliases"] = n.aliases;
    o["examples"] = n.examples;
    jn.push_back(std::move(o));
  }
  json je = json::array();
  for (const auto& e : edges_) {
    je.push_back({{"source", e.source}, {"target", e.target}, {"relation", to_string(e.relation)}});
  }
  return {{"nodes", std::move(jn)}, {"edges", std::move(je)}};
}

bool CompetencyGraph::contains(std::string_view id) const {
  return index_.count(std::string(id)) > 0;
}

std::size_t CompetencyGraph::index(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) {
    throw Error(ErrorCode::UnknownCompetency, "unknown competency '" + std::string(id) + "'");
  }
  return it->second;
}

const CompetencyNode& CompetencyGraph::node(std::string_view id) const {
  return nodes_[index(id)];
}

std::vector<std::string> CompetencyGraph::ids() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.competency_id);
  return out;
}

IdSet CompetencyGraph::closure(std::size_t start,
                               const std::vector<std::vector<std::size_t>>& adj) const {
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<std::size_t> stack = adj[start];
  IdSet out;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = true;
    if (v != start) out.insert(nodes_[v].competency_id);
    for (auto w : adj[v]) stack.push_back(w);
  }
  return out;
}

IdSet CompetencyGraph::neighbours(std::string_view id,
                                  const std::vector<std::vector<std::size_t>>& adj) const {
  IdSet out;
  for (auto v : adj[index(id)]) out.insert(nodes_[v].competency_id);
  return out;
}

IdSet CompetencyGraph::ancestors(std::string_view id) const { return closure(index(id), parents_); }
IdSet CompetencyGraph::descendants(std::string_view id) const { return closure(index(id), children_); }
IdSet CompetencyGraph::prerequisites_of(std::string_view id) const {
  return closure(index(id), prereq_in_);
}
IdSet CompetencyGraph::direct_prerequisites(std::string_view id) const {
  return neighbours(id, prereq_in_);
}
IdSet CompetencyGraph::parents(std::string_view id) const { return neighbours(id, parents_); }
IdSet CompetencyGraph::children(std::string_view id) const { return neighbours(id, children_); }

CompetencyGraph load_graph(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
  return CompetencyGraph::from_json(j);
}

namespace {

// Tarjan's algorithm; returns components with more than one member.
std::vector<std::vector<std::size_t>> nontrivial_sccs(
    const std::vector<std::vector<std::size_t>>& adj) {
  const std::size_t n = adj.size();
  std::vector<int> idx(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> out;
  int counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    idx[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (auto w : adj[v]) {
      if (idx[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], idx[w]);
      }
    }
    if (low[v] == idx[v]) {
      std::vector<std::size_t> comp;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp.push_back(w);
      } while (w != v);
      if (comp.size() > 1) {
        std::sort(comp.begin(), comp.end());
        out.push_back(std::move(comp));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (idx[v] < 0) visit(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<Violation> validate_hierarchy(const CompetencyGraph& g) {
  std::vector<Violation> out;
  auto report = [&](const std::vector<std::vector<std::size_t>>& adj, Violation::Kind kind) {
    for (const auto& comp : nontrivial_sccs(adj)) {
      Violation v{kind, {}};
      for (auto i : comp) v.members.push_back(g.nodes_[i].competency_id);
      out.push_back(std::move(v));
    }
  };
  report(g.parents_, Violation::Kind::HierarchyCycle);
  report(g.prereq_in_, Violation::Kind::PrerequisiteCycle);
  return out;
}

void require_acyclic(const CompetencyGraph& g) {
  const auto violations = validate_hierarchy(g);
  if (violations.empty()) return;
  std::string msg = "competency graph has cycles:";
  for (const auto& v : violations) {
    msg += v.kind == Violation::Kind::HierarchyCycle ? " hierarchy[" : " prerequisite[";
    for (std::size_t i = 0; i < v.members.size(); ++i) {
      msg += (i ? "," : "") + v.members[i];
    }
    msg += "]";
  }
  throw Error(ErrorCode::HierarchyCycle, msg);
}

namespace {

std::string labels_of(const CompetencyGraph& g, const IdSet& ids) {
  std::string out;
  for (const auto& id : ids) {
    const auto& n = g.node(id);
    if (!out.empty()) out += "; ";
    out += n.label_fr;
    if (n.label_en) out += "; " + *n.label_en;
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (s.empty()) continue;
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

}  // namespace

CompetencyProfile build_profile(const CompetencyGraph& g, std::string_view id) {
  const auto& n = g.node(id);
  std::vector<std::string> fields;
  fields.push_back(n.label_en ? n.label_fr + "; " + *n.label_en : n.label_fr);
  fields.push_back(join(n.aliases));
  fields.push_back(n.description);
  fields.push_back(join(n.examples));
  fields.push_back(labels_of(g, g.parents(id)));
  fields.push_back(labels_of(g, g.children(id)));
  fields.push_back(labels_of(g, g.direct_prerequisites(id)));
  std::string text;
  for (const auto& f : fields) {
    if (f.empty()) continue;
    if (!text.empty()) text += '\n';
    text += f;
  }
  return {n.competency_id, std::move(text)};
}

std::vector<CompetencyProfile> build_profiles(const CompetencyGraph& g) {
  std::vector<CompetencyProfile> out;
  out.reserve(g.size());
  for (const auto& n : g.nodes()) out.push_back(build_profile(g, n.competency_id));
  return out;
}

}  // namespace comptag
