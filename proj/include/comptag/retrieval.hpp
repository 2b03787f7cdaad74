#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/graph.hpp"

namespace comptag {

struct RankedEntry {
  std::string competency_id;
  double score = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

/// Descending score, ties by ascending competency_id, no duplicate ids.
struct RankedList {
  std::string fragment_id;
  std::vector<RankedEntry> entries;
};

struct CandidateSet {
  std::string fragment_id;
  std::size_t k = 0;
  std::vector<RankedEntry> candidates;
};

nlohmann::json to_json(const RankedList& rl);
RankedList ranked_list_from_json(const nlohmann::json& j);

/// Sorts entries into canonical order.
void canonicalize(std::vector<RankedEntry>& entries);

using Analyzer = std::function<std::vector<std::string>(std::string_view)>;
Analyzer default_analyzer();

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 over a fixed document set; frozen after build.
class Bm25Index {
 public:
  struct Document {
    std::string id;
    std::string text;
  };

  static Bm25Index build(const std::vector<Document>& docs, Analyzer analyzer = default_analyzer(),
                         Bm25Params params = {});
  static Bm25Index build(const std::vector<CompetencyProfile>& profiles,
                         Analyzer analyzer = default_analyzer(), Bm25Params params = {});

  std::size_t doc_count() const noexcept { return ids_.size(); }
  double avg_length() const noexcept { return avg_length_; }
  std::size_t doc_length(std::size_t doc) const { return lengths_.at(doc); }
  const std::string& doc_id(std::size_t doc) const { return ids_.at(doc); }
  std::size_t df(const std::string& term) const;
  std::size_t tf(const std::string& term, std::size_t doc) const;
  double idf(const std::string& term) const;
  const Bm25Params& params() const noexcept { return params_; }

  /// Scores every document sharing a term with the query; zero scores are
  /// omitted.
  RankedList rank(std::string_view query, std::string fragment_id = {}) const;

 private:
  Analyzer analyzer_;
  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> lengths_;
  double avg_length_ = 0.0;
  // term -> postings (doc index, term frequency), doc index ascending
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> postings_;
};

RankedList bm25_rank(const Bm25Index& idx, std::string_view query_text,
                     std::string fragment_id = {});

/// Embeddings keyed by fragment or competency id; all of one dimension.
class VectorStore {
 public:
  void add(std::string id, std::vector<double> vec);
  static VectorStore load(const std::filesystem::path& path);

  bool contains(const std::string& id) const { return vectors_.count(id) > 0; }
  const std::vector<double>& get(const std::string& id) const;
  std::size_t dimension() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t dim_ = 0;
};

double cosine(const std::vector<double>& u, const std::vector<double>& v);

RankedList cosine_rank(const VectorStore& vectors, const std::vector<std::string>& competency_ids,
                       const std::string& fragment_id);

/// Precomputed (fragment, competency) scores, e.g. from a cross-encoder.
class PairScores {
 public:
  void add(const std::string& fragment_id, const std::string& competency_id, double score);
  static PairScores load(const std::filesystem::path& path);
  RankedList rank(const std::string& fragment_id) const;

 private:
  std::unordered_map<std::string, std::map<std::string, double>> scores_;
};

RankedList rrf_fuse(const std::vector<RankedList>& lists, int k_rrf = 60);

CandidateSet topk_candidates(const RankedList& rl, std::size_t k);
std::set<std::string> rank_to_multilabel(const RankedList& rl, std::size_t k);

}  // namespace comptag
