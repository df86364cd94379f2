#include "tessa/text_util.hpp"

#include "tessa/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace tessa {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::IoError: return "IoError";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::PeriodTooSmall: return "PeriodTooSmall";
    case Errc::WindowTooLarge: return "WindowTooLarge";
    case Errc::LagTooLarge: return "LagTooLarge";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ZeroVariance: return "ZeroVariance";
    case Errc::EmbedDimTooLarge: return "EmbedDimTooLarge";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::MissingSlot: return "MissingSlot";
    case Errc::UnknownSlot: return "UnknownSlot";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::ResponseEmpty: return "ResponseEmpty";
    case Errc::InvalidRequest: return "InvalidRequest";
    case Errc::EmptyAnnotation: return "EmptyAnnotation";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoFeaturesSelected: return "NoFeaturesSelected";
    case Errc::PreconditionFailed: return "PreconditionFailed";
    case Errc::EmptyTermSet: return "EmptyTermSet";
    case Errc::NegativeScore: return "NegativeScore";
    case Errc::EmptyScores: return "EmptyScores";
    case Errc::UnknownToken: return "UnknownToken";
    case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
    case Errc::UnpairedItem: return "UnpairedItem";
    case Errc::MetricMismatch: return "MetricMismatch";
  }
  return "Unknown";
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string normalize_name(std::string_view s) {
  std::string lowered = to_lower(trim(s));
  std::string out;
  out.reserve(lowered.size());
  bool in_space = false;
  for (char c : lowered) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return count_ci(haystack, needle) > 0;
}

std::size_t count_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  std::size_t count = 0;
  for (std::size_t pos = h.find(n); pos != std::string::npos; pos = h.find(n, pos + n.size())) {
    ++count;
  }
  return count;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child) {
  return splitmix64(splitmix64(parent) ^ (child * 0xd1342543de82ef95ULL + 1));
}

}  // namespace tessa
