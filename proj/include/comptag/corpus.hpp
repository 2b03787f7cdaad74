#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace comptag {

enum class ResourceKind { Page, PdfText, Url, Quiz, Assignment };

std::string_view to_string(ResourceKind kind) noexcept;
ResourceKind resource_kind_from_string(std::string_view s);

struct Resource {
  std::string resource_id;
  std::string course_id;
  ResourceKind kind = ResourceKind::Page;
  std::string title;
  std::optional<std::string> url;
  std::string body;  // UTF-8, stored exactly as ingested
};

struct Fragment {
  std::string fragment_id;
  std::string resource_id;
  std::optional<std::string> section_title;
  std::size_t start = 0;  // scalar-value offsets into the resource body
  std::size_t end = 0;
  std::string text;
  std::size_t order_index = 0;
};

struct FragmentConfig {
  std::size_t max_tokens = 512;
};

/// Half-open character range.
struct Segment {
  std::size_t start;
  std::size_t end;
  bool operator==(const Segment&) const = default;
};

nlohmann::json to_json(const Resource& r);
Resource resource_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Fragment& f);
Fragment fragment_from_json(const nlohmann::json& j);

/// Reads a JSONL corpus. Errors carry the offending line number.
std::vector<Resource> ingest_resources(const std::filesystem::path& path);

std::string make_fragment_id(std::string_view resource_id, std::size_t order_index);

/// Splits a resource at headings (markdown '#'..'###', HTML h1..h3) and, for
/// quizzes and assignments, at blank-line item boundaries. Oversize segments
/// are re-split with fallback_segment inside their structural unit.
std::vector<Fragment> fragment_resource(const Resource& r, const FragmentConfig& cfg);

/// Greedy packing of paragraphs, then sentences, then whitespace-delimited
/// windows into chunks of at most `max_tokens` tokens. Offsets are relative
/// to `text` and trimmed to non-whitespace content.
std::vector<Segment> fallback_segment(std::u32string_view text, std::size_t max_tokens);
std::vector<Segment> fallback_segment(std::string_view utf8, std::size_t max_tokens);

}  // namespace comptag
