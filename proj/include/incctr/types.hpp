#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace incctr {

// Feature id 0 is the shared "Others" dummy feature; real ids start at 1.
using FeatureId = std::uint32_t;
inline constexpr FeatureId kOthersId = 0;

// Sentinel token produced by infrequent-feature filtering. The registry never
// assigns it an id; lookups resolve it to kOthersId.
inline constexpr const char* kOthersToken = "__others__";

// Token substituted for absent field values so missingness stays learnable.
inline constexpr const char* kMissingToken = "__missing__";

// Errors partition into the CLI exit-code classes.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// One categorical value of one field, post-discretization.
struct RawFeature {
  int field_index = 0;
  std::string token;
};

// One day of labeled samples. Storage is flat: every sample has exactly
// num_fields tokens, sample i owns tokens [i*num_fields, (i+1)*num_fields).
struct DayBlock {
  int day_index = 0;
  int num_fields = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> tokens;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const std::string> sample_tokens(std::size_t i) const {
    return {tokens.data() + i * static_cast<std::size_t>(num_fields),
            static_cast<std::size_t>(num_fields)};
  }

  const std::string& token_at(std::size_t sample, int field) const {
    return tokens[sample * static_cast<std::size_t>(num_fields) +
                  static_cast<std::size_t>(field)];
  }

  void push_sample(std::uint8_t label, std::vector<std::string> sample) {
    if (static_cast<int>(sample.size()) != num_fields)
      throw DataError("sample has " + std::to_string(sample.size()) +
                      " fields, block schema has " + std::to_string(num_fields));
    labels.push_back(label);
    for (auto& t : sample) tokens.push_back(std::move(t));
  }

  void validate() const {
    if (num_fields <= 0) throw DataError("block has no field schema");
    if (tokens.size() != labels.size() * static_cast<std::size_t>(num_fields))
      throw DataError("block token count does not match schema");
    for (const auto& t : tokens)
      if (t.empty()) throw DataError("empty token in block");
  }
};

}  // namespace incctr
