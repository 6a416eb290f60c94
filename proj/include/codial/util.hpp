#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace codial {

using json = nlohmann::json;

// Base of every error the library raises. `kind` names the error class from
// the public contract (e.g. "SchemaViolation", "BackendError").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

namespace util {

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("DigestError", "sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

// Compact dump with sorted keys (nlohmann::json objects are std::map backed).
inline std::string canonical_dump(const json& j) { return j.dump(-1, ' ', false); }

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// "a", "a or b", "a, b or c"
inline std::string join_list(const std::vector<std::string>& parts, std::string_view last_sep) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts.front();
  std::string out;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  out += " ";
  out += last_sep;
  out += " ";
  out += parts.back();
  return out;
}

// Lowercase words made of [a-z0-9_]; everything else separates.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '_') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Removes a single surrounding pair of matching quotes, if present.
inline std::string strip_quotes(std::string_view s) {
  if (s.size() >= 2) {
    char f = s.front(), b = s.back();
    if ((f == '"' && b == '"') || (f == '\'' && b == '\'')) return std::string(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

// Renders a JSON value for human-facing text: strings unquoted, rest as JSON.
inline std::string display(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "null";
  return v.dump();
}

inline std::string json_path(std::string_view base, std::string_view key) {
  std::string out(base);
  out += "/";
  out += key;
  return out;
}

inline std::string json_path(std::string_view base, std::size_t index) {
  return json_path(base, std::to_string(index));
}

}  // namespace util
}  // namespace codial
