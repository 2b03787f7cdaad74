#include "comptag/corpus.hpp"

#include <unordered_set>

#include "comptag/error.hpp"
#include "comptag/io.hpp"
#include "comptag/text.hpp"

namespace comptag {

using nlohmann::json;

std::string_view to_string(ResourceKind kind) noexcept {
  switch (kind) {
    case ResourceKind::Page: return "page";
    case ResourceKind::PdfText: return "pdf_text";
    case ResourceKind::Url: return "url";
    case ResourceKind::Quiz: return "quiz";
    case ResourceKind::Assignment: return "assignment";
  }
  return "page";
}

ResourceKind resource_kind_from_string(std::string_view s) {
  if (s == "page") return ResourceKind::Page;
  if (s == "pdf_text") return ResourceKind::PdfText;
  if (s == "url") return ResourceKind::Url;
  if (s == "quiz") return ResourceKind::Quiz;
  if (s == "assignment") return ResourceKind::Assignment;
  throw Error(ErrorCode::MalformedRecord, "unknown resource kind '" + std::string(s) + "'");
}

json to_json(const Resource& r) {
  json j = {{"resource_id", r.resource_id},
            {"course_id", r.course_id},
            {"kind", to_string(r.kind)},
            {"title", r.title}};
  j["url"] = r.url ? json(*r.url) : json(nullptr);
  j["body"] = r.body;
  return j;
}

namespace {

const std::string& require_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedRecord, std::string("missing or non-string field '") + field + "'");
  }
  return it->get_ref<const std::string&>();
}

}  // namespace

Resource resource_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedRecord, "record is not an object");
  Resource r;
  r.resource_id = require_string(j, "resource_id");
  if (r.resource_id.empty()) throw Error(ErrorCode::MalformedRecord, "empty resource_id");
  r.course_id = require_string(j, "course_id");
  r.kind = resource_kind_from_string(require_string(j, "kind"));
  r.title = require_string(j, "title");
  if (auto it = j.find("url"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::MalformedRecord, "non-string field 'url'");
    r.url = it->get<std::string>();
  }
  r.body = require_string(j, "body");
  text::decode_utf8(r.body);  // validates encoding
  return r;
}

json to_json(const Fragment& f) {
  json j = {{"fragment_id", f.fragment_id}, {"resource_id", f.resource_id}};
  j["section_title"] = f.section_title ? json(*f.section_title) : json(nullptr);
  j["start"] = f.start;
  j["end"] = f.end;
  j["order_index"] = f.order_index;
  j["text"] = f.text;
  return j;
}

Fragment fragment_from_json(const json& j) {
  try {
    Fragment f;
    f.fragment_id = j.at("fragment_id").get<std::string>();
    f.resource_id = j.at("resource_id").get<std::string>();
    if (auto it = j.find("section_title"); it != j.end() && !it->is_null()) {
      f.section_title = it->get<std::string>();
    }
    f.start = j.at("start").get<std::size_t>();
    f.end = j.at("end").get<std::size_t>();
    f.order_index = j.at("order_index").get<std::size_t>();
    f.text = j.at("text").get<std::string>();
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("bad fragment record: ") + e.what());
  }
}

std::vector<Resource> ingest_resources(const std::filesystem::path& path) {
  std::vector<Resource> out;
  std::unordered_set<std::string> seen;
  io::for_each_jsonl(path, [&](std::size_t line_no, const json& j) {
    Resource r;
    try {
      r = resource_from_json(j);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.resource_id).second) {
      throw Error(ErrorCode::DuplicateResourceId,
                  path.string() + ":" + std::to_string(line_no) + ": duplicate resource_id '" +
                      r.resource_id + "'");
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::string make_fragment_id(std::string_view resource_id, std::size_t order_index) {
  return std::string(resource_id) + "::f" + std::to_string(order_index);
}

namespace {

struct Line {
  std::size_t start;
  std::size_t end;  // excludes the newline
};

std::vector<Line> split_lines(std::u32string_view t) {
  std::vector<Line> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == U'\n') {
      lines.push_back({start, i});
      start = i + 1;
    }
  }
  lines.push_back({start, t.size()});
  return lines;
}

bool is_blank(std::u32string_view t, const Line& l) {
  for (std::size_t i = l.start; i < l.end; ++i) {
    if (!text::is_space(t[i])) return false;
  }
  return true;
}

Segment trim(std::u32string_view t, Segment s) {
  while (s.start < s.end && text::is_space(t[s.start])) ++s.start;
  while (s.end > s.start && text::is_space(t[s.end - 1])) --s.end;
  return s;
}

std::u32string strip_tags(std::u32string_view s) {
  std::u32string out;
  bool in_tag = false;
  for (char32_t c : s) {
    if (c == U'<') {
      in_tag = true;
    } else if (c == U'>') {
      in_tag = false;
      out.push_back(U' ');
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  return out;
}

// Returns the heading text if the line is an h1-h3 heading.
std::optional<std::string> heading_text(std::u32string_view t, const Line& l) {
  std::u32string_view line = t.substr(l.start, l.end - l.start);
  std::size_t i = 0;
  while (i < line.size() && i < 3 && line[i] == U' ') ++i;
  if (i < line.size() && line[i] == U'#') {
    std::size_t hashes = 0;
    while (i < line.size() && line[i] == U'#') {
      ++hashes;
      ++i;
    }
    if (hashes > 3 || i >= line.size() || (line[i] != U' ' && line[i] != U'\t')) {
      return std::nullopt;
    }
    std::u32string title(line.substr(i));
    while (!title.empty() && (title.back() == U'#' || text::is_space(title.back()))) {
      title.pop_back();
    }
    auto squashed = text::squash_whitespace(text::encode_utf8(title));
    if (squashed.empty()) return std::nullopt;
    return squashed;
  }
  while (i < line.size() && text::is_space(line[i])) ++i;
  if (line.size() - i >= 4 && line[i] == U'<' && (line[i + 1] == U'h' || line[i + 1] == U'H') &&
      line[i + 2] >= U'1' && line[i + 2] <= U'3' &&
      (line[i + 3] == U'>' || text::is_space(line[i + 3]))) {
    auto squashed = text::squash_whitespace(text::encode_utf8(strip_tags(line.substr(i))));
    if (squashed.empty()) return std::nullopt;
    return squashed;
  }
  return std::nullopt;
}

struct Section {
  Segment range;
  std::optional<std::string> title;
  std::optional<Line> heading;
};

std::vector<Section> split_sections(std::u32string_view t, const std::vector<Line>& lines) {
  std::vector<Section> sections;
  Section current{{0, 0}, std::nullopt, std::nullopt};
  for (const auto& line : lines) {
    if (auto title = heading_text(t, line)) {
      current.range.end = line.start;
      sections.push_back(current);
      current = Section{{line.start, 0}, std::move(title), line};
    }
  }
  current.range.end = t.size();
  sections.push_back(current);
  return sections;
}

// Blank-line-delimited blocks inside `range`.
std::vector<Segment> paragraphs(std::u32string_view t, Segment range) {
  std::vector<Segment> out;
  std::optional<std::size_t> open;
  std::size_t last_end = range.start;
  std::size_t line_start = range.start;
  for (std::size_t i = range.start; i <= range.end; ++i) {
    if (i == range.end || t[i] == U'\n') {
      const Line line{line_start, i};
      if (is_blank(t, line)) {
        if (open) {
          out.push_back({*open, last_end});
          open.reset();
        }
      } else {
        if (!open) open = line.start;
        last_end = line.end;
      }
      line_start = i + 1;
    }
  }
  if (open) out.push_back({*open, last_end});
  return out;
}

struct Unit {
  Segment range;
  std::size_t tokens;
};

// Sentence ranges: a terminator . ! ? followed by whitespace closes a sentence.
std::vector<Segment> sentences(std::u32string_view t, Segment range) {
  std::vector<Segment> out;
  std::size_t start = range.start;
  for (std::size_t i = range.start; i < range.end; ++i) {
    const char32_t c = t[i];
    if ((c == U'.' || c == U'!' || c == U'?') && i + 1 < range.end && text::is_space(t[i + 1])) {
      out.push_back({start, i + 1});
      start = i + 1;
    }
  }
  out.push_back({start, range.end});
  return out;
}

// level 1: paragraph, level 2: sentence.
void emit_units(std::u32string_view t, Segment range, std::size_t max_tokens, int level,
                std::vector<Unit>& units) {
  range = trim(t, range);
  if (range.start >= range.end) return;
  const auto view = t.substr(range.start, range.end - range.start);
  const std::size_t tokens = text::count_tokens(view);
  if (tokens <= max_tokens) {
    units.push_back({range, tokens});
    return;
  }
  if (level == 1) {
    auto sents = sentences(t, range);
    if (sents.size() > 1) {
      for (const auto& s : sents) emit_units(t, s, max_tokens, 2, units);
      return;
    }
  }
  // Oversize sentence: cut after every max_tokens-th token.
  const auto spans = text::token_spans(view);
  for (std::size_t i = 0; i < spans.size(); i += max_tokens) {
    const std::size_t last = std::min(i + max_tokens, spans.size()) - 1;
    units.push_back({{range.start + spans[i].start, range.start + spans[last].end},
                     last - i + 1});
  }
}

}  // namespace

std::vector<Segment> fallback_segment(std::u32string_view text, std::size_t max_tokens) {
  if (max_tokens == 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  std::vector<Unit> units;
  for (const auto& p : paragraphs(text, {0, text.size()})) {
    emit_units(text, p, max_tokens, 1, units);
  }
  std::vector<Segment> out;
  std::optional<Segment> current;
  std::size_t current_tokens = 0;
  for (const auto& u : units) {
    if (current && current_tokens + u.tokens <= max_tokens) {
      current->end = u.range.end;
      current_tokens += u.tokens;
      continue;
    }
    if (current) out.push_back(*current);
    current = u.range;
    current_tokens = u.tokens;
  }
  if (current) out.push_back(*current);
  return out;
}

std::vector<Segment> fallback_segment(std::string_view utf8, std::size_t max_tokens) {
  return fallback_segment(std::u32string_view(text::decode_utf8(utf8)), max_tokens);
}

std::vector<Fragment> fragment_resource(const Resource& r, const FragmentConfig& cfg) {
  if (cfg.max_tokens == 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  const std::u32string body = text::decode_utf8(r.body);
  const std::u32string_view t(body);
  const auto lines = split_lines(t);
  const bool itemized = r.kind == ResourceKind::Quiz || r.kind == ResourceKind::Assignment;

  std::vector<Fragment> out;
  auto push = [&](Segment s, const std::optional<std::string>& title) {
    Fragment f;
    f.order_index = out.size();
    f.fragment_id = make_fragment_id(r.resource_id, f.order_index);
    f.resource_id = r.resource_id;
    f.section_title = title;
    f.start = s.start;
    f.end = s.end;
    f.text = text::encode_utf8(t.substr(s.start, s.end - s.start));
    out.push_back(std::move(f));
  };
  auto push_bounded = [&](Segment s, const std::optional<std::string>& title) {
    s = trim(t, s);
    if (s.start >= s.end) return;
    const auto view = t.substr(s.start, s.end - s.start);
    if (text::count_tokens(view) <= cfg.max_tokens) {
      push(s, title);
      return;
    }
    for (const auto& piece : fallback_segment(view, cfg.max_tokens)) {
      push({s.start + piece.start, s.start + piece.end}, title);
    }
  };

  for (const auto& section : split_sections(t, lines)) {
    if (!itemized) {
      push_bounded(section.range, section.title);
      continue;
    }
    auto items = paragraphs(t, section.range);
    // A heading line standing alone joins the item that follows it.
    if (section.heading && items.size() > 1 && items.front().end <= section.heading->end) {
      items[1].start = items.front().start;
      items.erase(items.begin());
    }
    for (const auto& item : items) push_bounded(item, section.title);
  }
  return out;
}

}  // namespace comptag
