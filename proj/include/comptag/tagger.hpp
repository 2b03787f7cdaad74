#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "comptag/corpus.hpp"
#include "comptag/graph.hpp"
#include "comptag/provider.hpp"
#include "comptag/retrieval.hpp"

namespace comptag {

enum class TagMode { Constrained, ZeroShot, FewShot };
enum class PromptLanguage { En, Fr };

std::string_view to_string(TagMode m) noexcept;
TagMode tag_mode_from_string(std::string_view s);
std::string_view to_string(PromptLanguage l) noexcept;
PromptLanguage prompt_language_from_string(std::string_view s);

struct Demonstration {
  std::string fragment_text;
  std::vector<std::string> gold_ids;
};

/// `allowed` holds the candidate ids (constrained, few-shot) or the whole
/// inventory (zero-shot), in presentation order.
struct TagRequest {
  std::string fragment_id;
  std::string fragment_text;
  TagMode mode = TagMode::Constrained;
  std::vector<std::string> allowed;
  std::vector<Demonstration> demonstrations;
};

TagRequest make_constrained_request(const Fragment& f, const CandidateSet& candidates);
TagRequest make_zero_shot_request(const Fragment& f, const CompetencyGraph& g);
TagRequest make_few_shot_request(const Fragment& f, const CandidateSet& candidates,
                                 std::vector<Demonstration> demonstrations);

struct TagPrediction {
  std::string fragment_id;
  std::string competency_id;
  double confidence = 0.0;
  std::size_t evidence_start = 0;
  std::size_t evidence_end = 0;
  std::string evidence_text;
  bool operator==(const TagPrediction&) const = default;
};

nlohmann::json to_json(const TagPrediction& p);
TagPrediction tag_prediction_from_json(const nlohmann::json& j);

/// An evidence span exactly as the provider reported it. Offsets that were
/// not integers are kept as `typed == false` and always count as invalid.
struct RawSpan {
  std::string fragment_id;
  long long start = 0;
  long long end = 0;
  bool typed = true;
};

nlohmann::json to_json(const RawSpan& s);
RawSpan raw_span_from_json(const nlohmann::json& j);

enum class MalformedReason { ParseError, UnknownCompetency, BadConfidence, BadSpan };
std::string_view to_string(MalformedReason r) noexcept;

struct ParseOutcome {
  std::vector<TagPrediction> predictions;
  std::optional<MalformedReason> malformed;
  std::string detail;
  std::vector<RawSpan> raw_spans;

  bool ok() const noexcept { return !malformed.has_value(); }
};

/// Renders requests into prompt text. Zero-shot inventories larger than
/// `full_inventory_limit` are listed by label only.
class PromptBuilder {
 public:
  explicit PromptBuilder(const CompetencyGraph& graph, PromptLanguage lang = PromptLanguage::En,
                         std::size_t full_inventory_limit = 50)
      : graph_(graph), lang_(lang), full_inventory_limit_(full_inventory_limit) {}

  std::string build(const TagRequest& req) const;
  PromptLanguage language() const noexcept { return lang_; }

 private:
  const CompetencyGraph& graph_;
  PromptLanguage lang_;
  std::size_t full_inventory_limit_;
};

std::string system_message(PromptLanguage lang);

/// Markers the prompt uses around the target fragment; the prompt always
/// ends with `kTargetClose`.
inline constexpr std::string_view kCompetenciesOpen = "<competencies>\n";
inline constexpr std::string_view kCompetenciesClose = "</competencies>\n";
inline constexpr std::string_view kTargetOpen = "<target_fragment>\n";
inline constexpr std::string_view kTargetClose = "\n</target_fragment>";

/// Fragment text and allowed ids recovered from a prompt built by
/// PromptBuilder.
struct PromptView {
  std::string fragment_text;
  std::vector<std::string> allowed;
};
std::optional<PromptView> parse_prompt(std::string_view prompt);

ParseOutcome parse_response(std::string_view raw, const TagRequest& req);

/// Offline provider: selects every allowed competency whose label or alias
/// occurs in the fragment, ignoring case and accents.
class MockProvider : public Provider {
 public:
  explicit MockProvider(const CompetencyGraph& graph) : graph_(graph) {}
  std::string complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  /// The heuristic itself, independent of prompt parsing.
  nlohmann::json select(std::string_view fragment_text,
                        const std::vector<std::string>& allowed) const;

 private:
  const CompetencyGraph& graph_;
};

struct TaggerSettings {
  std::string model = "gpt-4o-mini";
  double temperature = 0.0;
  int retries = 1;
  std::size_t concurrency = 4;
};

struct TaggerOutcome {
  std::vector<TagPrediction> predictions;
  std::size_t discarded = 0;
  std::vector<RawSpan> raw_spans;
  std::vector<nlohmann::json> raw_log;
};

/// Sends the prompt, retrying malformed answers `settings.retries` times.
/// Malformed model output never throws; it is counted as a discard.
TaggerOutcome tag_fragment(const TagRequest& req, const PromptBuilder& prompts,
                           Provider& provider, const TaggerSettings& settings);

/// Tags independent requests with at most `settings.concurrency` requests
/// in flight; outcomes keep the order of `requests`.
std::vector<TaggerOutcome> tag_all(const std::vector<TagRequest>& requests,
                                   const PromptBuilder& prompts, Provider& provider,
                                   const TaggerSettings& settings);

/// Labelled training fragments from which few-shot demonstrations are drawn
/// by BM25 similarity to the target.
class DemonstrationPool {
 public:
  struct Item {
    std::string fragment_id;
    std::string text;
    std::vector<std::string> gold_ids;
  };

  explicit DemonstrationPool(std::vector<Item> items);
  std::vector<Demonstration> select(std::string_view target_text, std::size_t n,
                                    std::string_view exclude_fragment_id = {}) const;
  bool empty() const noexcept { return items_.empty(); }

 private:
  std::vector<Item> items_;
  std::optional<Bm25Index> index_;
};

}  // namespace comptag
