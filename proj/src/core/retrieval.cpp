#include "comptag/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "comptag/error.hpp"
#include "comptag/io.hpp"
#include "comptag/text.hpp"

namespace comptag {

using nlohmann::json;

json to_json(const RankedList& rl) {
  json entries = json::array();
  for (const auto& e : rl.entries) {
    entries.push_back({{"competency_id", e.competency_id}, {"score", e.score}});
  }
  return {{"fragment_id", rl.fragment_id}, {"ranked", std::move(entries)}};
}

RankedList ranked_list_from_json(const json& j) {
  try {
    RankedList rl;
    rl.fragment_id = j.at("fragment_id").get<std::string>();
    for (const auto& e : j.at("ranked")) {
      rl.entries.push_back({e.at("competency_id").get<std::string>(), e.at("score").get<double>()});
    }
    return rl;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad ranked list: ") + e.what());
  }
}

void canonicalize(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.competency_id < b.competency_id;
  });
}

Analyzer default_analyzer() {
  return [](std::string_view s) { return text::analyze(s); };
}

Bm25Index Bm25Index::build(const std::vector<Document>& docs, Analyzer analyzer,
                           Bm25Params params) {
  if (docs.empty()) throw Error(ErrorCode::EmptyProfileSet, "cannot index an empty profile set");
  Bm25Index idx;
  idx.analyzer_ = std::move(analyzer);
  idx.params_ = params;
  std::size_t total = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto tokens = idx.analyzer_(docs[d].text);
    std::map<std::string, std::size_t> counts;
    for (const auto& t : tokens) ++counts[t];
    for (const auto& [term, n] : counts) idx.postings_[term].emplace_back(d, n);
    idx.ids_.push_back(docs[d].id);
    idx.lengths_.push_back(tokens.size());
    total += tokens.size();
  }
  idx.avg_length_ = static_cast<double>(total) / static_cast<double>(docs.size());
  if (idx.avg_length_ <= 0.0) {
    throw Error(ErrorCode::EmptyProfileSet, "profiles contain no indexable terms");
  }
  return idx;
}

Bm25Index Bm25Index::build(const std::vector<CompetencyProfile>& profiles, Analyzer analyzer,
                           Bm25Params params) {
  std::vector<Document> docs;
  docs.reserve(profiles.size());
  for (const auto& p : profiles) docs.push_back({p.competency_id, p.profile_text});
  return build(docs, std::move(analyzer), params);
}

std::size_t Bm25Index::df(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::size_t Bm25Index::tf(const std::string& term, std::size_t doc) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return 0;
  for (const auto& [d, n] : it->second) {
    if (d == doc) return n;
  }
  return 0;
}

double Bm25Index::idf(const std::string& term) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df(term));
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

RankedList Bm25Index::rank(std::string_view query, std::string fragment_id) const {
  auto terms = analyzer_(query);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  std::vector<double> scores(doc_count(), 0.0);
  std::vector<bool> hit(doc_count(), false);
  const double k1 = params_.k1;
  const double b = params_.b;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& [d, n] : it->second) {
      const double tf = static_cast<double>(n);
      const double norm = k1 * (1.0 - b + b * static_cast<double>(lengths_[d]) / avg_length_);
      scores[d] += w * tf * (k1 + 1.0) / (tf + norm);
      hit[d] = true;
    }
  }
  RankedList rl{std::move(fragment_id), {}};
  for (std::size_t d = 0; d < doc_count(); ++d) {
    if (hit[d] && scores[d] > 0.0) rl.entries.push_back({ids_[d], scores[d]});
  }
  canonicalize(rl.entries);
  return rl;
}

RankedList bm25_rank(const Bm25Index& idx, std::string_view query_text, std::string fragment_id) {
  return idx.rank(query_text, std::move(fragment_id));
}

void VectorStore::add(std::string id, std::vector<double> vec) {
  if (vectors_.empty()) {
    dim_ = vec.size();
  } else if (vec.size() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector '" + id + "' has dimension " + std::to_string(vec.size()) +
                    ", expected " + std::to_string(dim_));
  }
  vectors_[std::move(id)] = std::move(vec);
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
  VectorStore store;
  io::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    try {
      store.add(j.at("id").get<std::string>(), j.at("vector").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return store;
}

const std::vector<double>& VectorStore::get(const std::string& id) const {
  auto it = vectors_.find(id);
  if (it == vectors_.end()) throw Error(ErrorCode::MissingVector, "no vector for '" + id + "'");
  return it->second;
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "cosine of vectors with different dimensions");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

RankedList cosine_rank(const VectorStore& vectors, const std::vector<std::string>& competency_ids,
                       const std::string& fragment_id) {
  const auto& q = vectors.get(fragment_id);
  RankedList rl{fragment_id, {}};
  for (const auto& c : competency_ids) {
    rl.entries.push_back({c, cosine(q, vectors.get(c))});
  }
  canonicalize(rl.entries);
  return rl;
}

void PairScores::add(const std::string& fragment_id, const std::string& competency_id,
                     double score) {
  scores_[fragment_id][competency_id] = score;
}

PairScores PairScores::load(const std::filesystem::path& path) {
  PairScores ps;
  io::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    try {
      ps.add(j.at("fragment_id").get<std::string>(), j.at("competency_id").get<std::string>(),
             j.at("score").get<double>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedRecord,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  return ps;
}

RankedList PairScores::rank(const std::string& fragment_id) const {
  RankedList rl{fragment_id, {}};
  if (auto it = scores_.find(fragment_id); it != scores_.end()) {
    for (const auto& [c, s] : it->second) rl.entries.push_back({c, s});
  }
  canonicalize(rl.entries);
  return rl;
}

RankedList rrf_fuse(const std::vector<RankedList>& lists, int k_rrf) {
  if (lists.size() < 2) throw Error(ErrorCode::InvalidArgument, "rrf_fuse needs at least two lists");
  if (k_rrf < 0) throw Error(ErrorCode::InvalidArgument, "k_rrf must be non-negative");
  for (const auto& l : lists) {
    if (l.fragment_id != lists.front().fragment_id) {
      throw Error(ErrorCode::FragmentMismatch, "rrf_fuse over lists for '" +
                                                   lists.front().fragment_id + "' and '" +
                                                   l.fragment_id + "'");
    }
  }
  // Ranks are summed in sorted order so the result does not depend on the
  // order of `lists`, down to the last bit.
  std::map<std::string, std::vector<std::size_t>> ranks;
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.entries.size(); ++r) {
      ranks[l.entries[r].competency_id].push_back(r + 1);
    }
  }
  RankedList out{lists.front().fragment_id, {}};
  for (auto& [c, rs] : ranks) {
    std::sort(rs.begin(), rs.end());
    double s = 0.0;
    for (auto r : rs) s += 1.0 / static_cast<double>(static_cast<std::size_t>(k_rrf) + r);
    out.entries.push_back({c, s});
  }
  canonicalize(out.entries);
  return out;
}

CandidateSet topk_candidates(const RankedList& rl, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  const auto n = std::min(k, rl.entries.size());
  return {rl.fragment_id, k, {rl.entries.begin(), rl.entries.begin() + static_cast<std::ptrdiff_t>(n)}};
}

std::set<std::string> rank_to_multilabel(const RankedList& rl, std::size_t k) {
  std::set<std::string> out;
  for (const auto& e : topk_candidates(rl, k).candidates) out.insert(e.competency_id);
  return out;
}

}  // namespace comptag
