#include "comptag/tagger.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "comptag/error.hpp"
#include "comptag/text.hpp"

namespace comptag {

using nlohmann::json;

std::string_view to_string(TagMode m) noexcept {
  switch (m) {
    case TagMode::Constrained: return "constrained";
    case TagMode::ZeroShot: return "zero_shot";
    case TagMode::FewShot: return "few_shot";
  }
  return "constrained";
}

TagMode tag_mode_from_string(std::string_view s) {
  if (s == "constrained") return TagMode::Constrained;
  if (s == "zero_shot") return TagMode::ZeroShot;
  if (s == "few_shot") return TagMode::FewShot;
  throw Error(ErrorCode::Config, "unknown tagging mode '" + std::string(s) + "'");
}

std::string_view to_string(PromptLanguage l) noexcept {
  return l == PromptLanguage::Fr ? "fr" : "en";
}

PromptLanguage prompt_language_from_string(std::string_view s) {
  if (s == "en") return PromptLanguage::En;
  if (s == "fr") return PromptLanguage::Fr;
  throw Error(ErrorCode::Config, "unknown prompt language '" + std::string(s) + "'");
}

std::string_view to_string(MalformedReason r) noexcept {
  switch (r) {
    case MalformedReason::ParseError: return "ParseError";
    case MalformedReason::UnknownCompetency: return "UnknownCompetency";
    case MalformedReason::BadConfidence: return "BadConfidence";
    case MalformedReason::BadSpan: return "BadSpan";
  }
  return "ParseError";
}

namespace {

std::vector<std::string> ids_of(const CandidateSet& c) {
  std::vector<std::string> ids;
  ids.reserve(c.candidates.size());
  for (const auto& e : c.candidates) ids.push_back(e.competency_id);
  return ids;
}

}  // namespace

TagRequest make_constrained_request(const Fragment& f, const CandidateSet& candidates) {
  return {f.fragment_id, f.text, TagMode::Constrained, ids_of(candidates), {}};
}

TagRequest make_zero_shot_request(const Fragment& f, const CompetencyGraph& g) {
  return {f.fragment_id, f.text, TagMode::ZeroShot, g.ids(), {}};
}

TagRequest make_few_shot_request(const Fragment& f, const CandidateSet& candidates,
                                 std::vector<Demonstration> demonstrations) {
  return {f.fragment_id, f.text, TagMode::FewShot, ids_of(candidates), std::move(demonstrations)};
}

json to_json(const TagPrediction& p) {
  return {{"fragment_id", p.fragment_id},       {"competency_id", p.competency_id},
          {"confidence", p.confidence},         {"evidence_start", p.evidence_start},
          {"evidence_end", p.evidence_end},     {"evidence_text", p.evidence_text}};
}

TagPrediction tag_prediction_from_json(const json& j) {
  try {
    TagPrediction p;
    p.fragment_id = j.at("fragment_id").get<std::string>();
    p.competency_id = j.at("competency_id").get<std::string>();
    p.confidence = j.at("confidence").get<double>();
    p.evidence_start = j.at("evidence_start").get<std::size_t>();
    p.evidence_end = j.at("evidence_end").get<std::size_t>();
    p.evidence_text = j.value("evidence_text", std::string{});
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad prediction record: ") + e.what());
  }
}

json to_json(const RawSpan& s) {
  json j = {{"fragment_id", s.fragment_id}};
  if (s.typed) {
    j["start"] = s.start;
    j["end"] = s.end;
  } else {
    j["start"] = nullptr;
    j["end"] = nullptr;
  }
  return j;
}

RawSpan raw_span_from_json(const json& j) {
  RawSpan s;
  s.fragment_id = j.at("fragment_id").get<std::string>();
  if (j.at("start").is_number_integer() && j.at("end").is_number_integer()) {
    s.start = j["start"].get<long long>();
    s.end = j["end"].get<long long>();
  } else {
    s.typed = false;
  }
  return s;
}

// ---------------------------------------------------------------- prompts

namespace {

struct Phrases {
  std::string_view task;
  std::string_view zero_ok;
  std::string_view list_intro;
  std::string_view schema;
  std::string_view examples_intro;
  std::string_view example_answer;
  std::string_view none;
  std::string_view target_intro;
};

constexpr Phrases kEnglish{
    "Task: decide which competencies from the list below are taught or assessed by the target "
    "learning fragment. Use only the listed competency identifiers.\n",
    "Selecting zero competencies is allowed: answer [] when none of them applies.\n",
    "Allowed competencies (id, label, description):\n",
    "Output format: reply with a JSON array and nothing else. Each element is an object\n"
    "{\"competency_id\": string, \"confidence\": number, \"evidence_start\": integer, "
    "\"evidence_end\": integer}\n"
    "- competency_id must be one of the listed identifiers;\n"
    "- confidence is between 0 and 1;\n"
    "- evidence_start and evidence_end delimit a passage of the target fragment supporting the "
    "competency, as character offsets counted in Unicode characters from 0 (end exclusive), with "
    "0 <= evidence_start < evidence_end <= fragment length.\n",
    "Annotated examples from other courses:\n",
    "Competencies: ",
    "none",
    "Target fragment",
};

constexpr Phrases kFrench{
    "Tâche : déterminer quelles compétences de la liste ci-dessous sont enseignées ou évaluées "
    "par le fragment pédagogique cible. Utiliser uniquement les identifiants listés.\n",
    "Ne sélectionner aucune compétence est permis : répondre [] si aucune ne s'applique.\n",
    "Compétences autorisées (id, libellé, description) :\n",
    "Format de sortie : répondre uniquement par un tableau JSON. Chaque élément est un objet\n"
    "{\"competency_id\": chaîne, \"confidence\": nombre, \"evidence_start\": entier, "
    "\"evidence_end\": entier}\n"
    "- competency_id doit être l'un des identifiants listés ;\n"
    "- confidence est compris entre 0 et 1 ;\n"
    "- evidence_start et evidence_end délimitent un passage du fragment cible justifiant la "
    "compétence, en positions de caractères Unicode comptées à partir de 0 (fin exclue), avec "
    "0 <= evidence_start < evidence_end <= longueur du fragment.\n",
    "Exemples annotés issus d'autres cours :\n",
    "Compétences : ",
    "aucune",
    "Fragment cible",
};

std::string one_line(const std::string& s, std::size_t max_chars) {
  auto wide = text::decode_utf8(text::squash_whitespace(s));
  if (wide.size() > max_chars) {
    wide.resize(max_chars);
    wide += U"…";
  }
  return text::encode_utf8(wide);
}

std::string length_tag(std::size_t n) { return "[length=" + std::to_string(n) + "]\n"; }

}  // namespace

std::string system_message(PromptLanguage lang) {
  return lang == PromptLanguage::Fr
             ? "Vous êtes un assistant d'annotation de compétences. Répondez uniquement en JSON."
             : "You are a competency tagging assistant. Reply with JSON only.";
}

std::string PromptBuilder::build(const TagRequest& req) const {
  if (req.allowed.empty()) {
    throw Error(ErrorCode::EmptyCandidateList,
                "no candidate competencies for fragment '" + req.fragment_id + "'");
  }
  const Phrases& p = lang_ == PromptLanguage::Fr ? kFrench : kEnglish;
  const bool labels_only =
      req.mode == TagMode::ZeroShot && req.allowed.size() > full_inventory_limit_;

  std::string out;
  out += p.task;
  out += p.zero_ok;
  out += '\n';
  out += p.list_intro;
  out += kCompetenciesOpen;
  for (const auto& id : req.allowed) {
    const auto& n = graph_.node(id);
    out += "- id: " + id + " | label: " + n.label_fr;
    if (n.label_en) out += " / " + *n.label_en;
    if (!labels_only) {
      if (!n.aliases.empty()) {
        out += " | aliases: ";
        for (std::size_t i = 0; i < n.aliases.size(); ++i) out += (i ? "; " : "") + n.aliases[i];
      }
      if (!n.description.empty()) out += " | description: " + one_line(n.description, 200);
    }
    out += '\n';
  }
  out += kCompetenciesClose;
  out += '\n';
  out += p.schema;

  if (req.mode == TagMode::FewShot && !req.demonstrations.empty()) {
    out += '\n';
    out += p.examples_intro;
    for (const auto& d : req.demonstrations) {
      out += "<example>\n<fragment>\n" + d.fragment_text + "\n</fragment>\n";
      out += p.example_answer;
      if (d.gold_ids.empty()) {
        out += p.none;
      } else {
        for (std::size_t i = 0; i < d.gold_ids.size(); ++i) out += (i ? ", " : "") + d.gold_ids[i];
      }
      out += "\n</example>\n";
    }
  }

  out += '\n';
  out += p.target_intro;
  out += ' ';
  out += length_tag(text::char_length(req.fragment_text));
  out += kTargetOpen;
  out += req.fragment_text;
  out += kTargetClose;
  return out;
}

std::optional<PromptView> parse_prompt(std::string_view prompt) {
  if (prompt.size() < kTargetClose.size() ||
      prompt.substr(prompt.size() - kTargetClose.size()) != kTargetClose) {
    return std::nullopt;
  }
  PromptView view;
  const auto list_start = prompt.find(kCompetenciesOpen);
  if (list_start == std::string_view::npos) return std::nullopt;
  const auto list_end = prompt.find(kCompetenciesClose, list_start);
  if (list_end == std::string_view::npos) return std::nullopt;
  auto list = prompt.substr(list_start + kCompetenciesOpen.size(),
                            list_end - list_start - kCompetenciesOpen.size());
  while (!list.empty()) {
    const auto nl = list.find('\n');
    const auto line = list.substr(0, nl);
    constexpr std::string_view prefix = "- id: ";
    if (line.substr(0, prefix.size()) == prefix) {
      auto rest = line.substr(prefix.size());
      view.allowed.emplace_back(rest.substr(0, rest.find(" | ")));
    }
    if (nl == std::string_view::npos) break;
    list.remove_prefix(nl + 1);
  }

  // The target follows "[length=N]\n<target_fragment>\n"; the first marker
  // whose enclosed text has N characters wins, so fragment text containing
  // the marker itself is still recovered.
  const auto body_end = prompt.size() - kTargetClose.size();
  std::size_t from = list_end;
  while (true) {
    const auto open = prompt.find(kTargetOpen, from);
    if (open == std::string_view::npos || open > body_end) return std::nullopt;
    const auto tag_start = prompt.rfind("[length=", open);
    if (tag_start != std::string_view::npos) {
      const auto tag = prompt.substr(tag_start + 8, open - tag_start - 8);
      std::size_t n = 0;
      bool numeric = tag.size() >= 3 && tag.substr(tag.size() - 2) == "]\n";
      for (char c : tag.substr(0, tag.size() >= 2 ? tag.size() - 2 : 0)) {
        if (c < '0' || c > '9') {
          numeric = false;
          break;
        }
        n = n * 10 + static_cast<std::size_t>(c - '0');
      }
      const auto start = open + kTargetOpen.size();
      if (numeric && start <= body_end) {
        const auto candidate = prompt.substr(start, body_end - start);
        if (text::char_length(candidate) == n) {
          view.fragment_text = std::string(candidate);
          return view;
        }
      }
    }
    from = open + 1;
  }
}

// ---------------------------------------------------------------- parsing

namespace {

std::string_view strip_fences(std::string_view s) {
  auto trim = [](std::string_view v) {
    const auto b = v.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = v.find_last_not_of(" \t\r\n");
    return v.substr(b, e - b + 1);
  };
  s = trim(s);
  if (s.substr(0, 3) == "```") {
    const auto nl = s.find('\n');
    if (nl == std::string_view::npos) return {};
    s.remove_prefix(nl + 1);
    const auto close = s.rfind("```");
    if (close != std::string_view::npos) s = s.substr(0, close);
    s = trim(s);
  }
  return s;
}

std::optional<long long> as_offset(const json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9e15) {
      return static_cast<long long>(d);
    }
  }
  return std::nullopt;
}

}  // namespace

ParseOutcome parse_response(std::string_view raw, const TagRequest& req) {
  ParseOutcome out;
  auto fail = [&](MalformedReason reason, std::string detail) {
    if (!out.malformed) {
      out.malformed = reason;
      out.detail = std::move(detail);
    }
  };

  const auto body = strip_fences(raw);
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) {
    const auto b = body.find('[');
    const auto e = body.rfind(']');
    if (b != std::string_view::npos && e != std::string_view::npos && b < e) {
      doc = json::parse(body.substr(b, e - b + 1), nullptr, false);
    }
  }
  if (doc.is_discarded()) {
    fail(MalformedReason::ParseError, "response is not JSON");
    return out;
  }
  if (doc.is_object() && doc.contains("predictions")) doc = doc["predictions"];
  if (!doc.is_array()) {
    fail(MalformedReason::ParseError, "response is not a JSON array");
    return out;
  }

  const auto fragment = text::decode_utf8(req.fragment_text);
  const auto length = static_cast<long long>(fragment.size());
  for (const auto& item : doc) {
    if (!item.is_object()) {
      fail(MalformedReason::ParseError, "array element is not an object");
      continue;
    }
    // Record the span as produced before judging anything else.
    std::optional<long long> a, b;
    const bool has_span = item.contains("evidence_start") && item.contains("evidence_end");
    if (has_span) {
      a = as_offset(item["evidence_start"]);
      b = as_offset(item["evidence_end"]);
      RawSpan span{req.fragment_id, a.value_or(0), b.value_or(0), a.has_value() && b.has_value()};
      out.raw_spans.push_back(span);
    }
    const auto id_it = item.find("competency_id");
    const auto conf_it = item.find("confidence");
    if (id_it == item.end() || !id_it->is_string() || conf_it == item.end() ||
        !conf_it->is_number() || !has_span) {
      fail(MalformedReason::ParseError, "element misses a required field");
      continue;
    }
    const auto id = id_it->get<std::string>();
    if (std::find(req.allowed.begin(), req.allowed.end(), id) == req.allowed.end()) {
      fail(MalformedReason::UnknownCompetency, "competency '" + id + "' was not offered");
      continue;
    }
    const double conf = conf_it->get<double>();
    if (!std::isfinite(conf) || conf < 0.0 || conf > 1.0) {
      fail(MalformedReason::BadConfidence, "confidence outside [0,1]");
      continue;
    }
    if (!a || !b || *a < 0 || *a >= *b || *b > length) {
      fail(MalformedReason::BadSpan, "evidence offsets outside the fragment");
      continue;
    }
    TagPrediction p;
    p.fragment_id = req.fragment_id;
    p.competency_id = id;
    p.confidence = conf;
    p.evidence_start = static_cast<std::size_t>(*a);
    p.evidence_end = static_cast<std::size_t>(*b);
    p.evidence_text = text::encode_utf8(
        std::u32string_view(fragment).substr(p.evidence_start, p.evidence_end - p.evidence_start));
    out.predictions.push_back(std::move(p));
  }
  if (out.malformed) out.predictions.clear();
  return out;
}

// ---------------------------------------------------------------- mock

json MockProvider::select(std::string_view fragment_text,
                          const std::vector<std::string>& allowed) const {
  const auto hay = text::fold(text::decode_utf8(fragment_text));
  struct Hit {
    std::string id;
    std::size_t start;
    std::size_t end;
  };
  std::vector<Hit> hits;
  for (const auto& id : allowed) {
    if (!graph_.contains(id)) continue;
    const auto& n = graph_.node(id);
    std::vector<std::string> terms{n.label_fr};
    if (n.label_en) terms.push_back(*n.label_en);
    terms.insert(terms.end(), n.aliases.begin(), n.aliases.end());
    std::optional<Hit> best;
    for (const auto& term : terms) {
      const auto needle = text::fold(text::decode_utf8(term));
      if (needle.empty()) continue;
      const auto pos = hay.find(needle);
      if (pos == std::u32string::npos) continue;
      const Hit h{id, pos, pos + needle.size()};
      if (!best || h.start < best->start ||
          (h.start == best->start && h.end > best->end)) {
        best = h;
      }
    }
    if (best) hits.push_back(*best);
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& x, const Hit& y) {
    return x.start != y.start ? x.start < y.start : x.id < y.id;
  });
  json out = json::array();
  const double length = static_cast<double>(hay.size());
  for (const auto& h : hits) {
    const double ratio = std::min(1.0, static_cast<double>(h.end - h.start) / length);
    out.push_back({{"competency_id", h.id},
                   {"confidence", 0.5 + 0.5 * ratio},
                   {"evidence_start", h.start},
                   {"evidence_end", h.end}});
  }
  return out;
}

std::string MockProvider::complete(const ChatRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role != "user") continue;
    if (auto view = parse_prompt(it->content)) {
      return select(view->fragment_text, view->allowed).dump();
    }
    break;
  }
  return "[]";
}

// ---------------------------------------------------------------- driving

TaggerOutcome tag_fragment(const TagRequest& req, const PromptBuilder& prompts,
                           Provider& provider, const TaggerSettings& settings) {
  const std::string prompt = prompts.build(req);
  ChatRequest chat{settings.model,
                   {{"system", system_message(prompts.language())}, {"user", prompt}},
                   settings.temperature};
  const auto digest = request_digest(chat);

  TaggerOutcome outcome;
  const int attempts = 1 + std::max(0, settings.retries);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const std::string raw = provider.complete(chat);
    auto parsed = parse_response(raw, req);
    outcome.raw_log.push_back({{"fragment_id", req.fragment_id},
                               {"attempt", attempt},
                               {"provider", provider.name()},
                               {"model", settings.model},
                               {"temperature", settings.temperature},
                               {"request_digest", digest},
                               {"prompt", prompt},
                               {"response", raw},
                               {"status", parsed.ok() ? "ok" : std::string(to_string(*parsed.malformed))}});
    outcome.raw_spans = std::move(parsed.raw_spans);
    if (parsed.ok()) {
      outcome.predictions = std::move(parsed.predictions);
      return outcome;
    }
  }
  outcome.discarded = 1;
  return outcome;
}

std::vector<TaggerOutcome> tag_all(const std::vector<TagRequest>& requests,
                                   const PromptBuilder& prompts, Provider& provider,
                                   const TaggerSettings& settings) {
  std::vector<TaggerOutcome> outcomes(requests.size());
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(settings.concurrency, requests.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    while (!failed.load()) {
      const auto i = next.fetch_add(1);
      if (i >= requests.size()) return;
      try {
        outcomes[i] = tag_fragment(requests[i], prompts, provider, settings);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return outcomes;
}

// ---------------------------------------------------------------- few-shot

DemonstrationPool::DemonstrationPool(std::vector<Item> items) : items_(std::move(items)) {
  if (items_.empty()) return;
  std::vector<Bm25Index::Document> docs;
  docs.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) docs.push_back({std::to_string(i), items_[i].text});
  try {
    index_ = Bm25Index::build(docs);
  } catch (const Error&) {
    index_.reset();  // nothing indexable
  }
}

std::vector<Demonstration> DemonstrationPool::select(std::string_view target_text, std::size_t n,
                                                     std::string_view exclude_fragment_id) const {
  std::vector<Demonstration> out;
  if (!index_ || n == 0) return out;
  for (const auto& e : index_->rank(target_text).entries) {
    const auto& item = items_[std::stoul(e.competency_id)];
    if (item.fragment_id == exclude_fragment_id) continue;
    out.push_back({item.text, item.gold_ids});
    if (out.size() == n) break;
  }
  return out;
}

}  // namespace comptag
