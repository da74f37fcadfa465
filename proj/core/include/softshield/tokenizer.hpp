#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "softshield/errors.hpp"

namespace softshield {

// Byte-level vocabulary: ids 0-255 are raw bytes, followed by the specials.
inline constexpr int kVocabSize = 260;
inline constexpr int kPadId = 256;
inline constexpr int kBosId = 257;
inline constexpr int kEosId = 258;
inline constexpr int kSepId = 259;

inline bool is_special(int id) { return id >= 256 && id < kVocabSize; }

inline std::vector<int> encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(int(c));
  return ids;
}

// Inverse of encode on byte ids; specials are dropped from the output.
inline std::string decode(const std::vector<int>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= kVocabSize) {
      throw RangeError("decode: token id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(kVocabSize));
    }
    if (id < 256) out.push_back(char(static_cast<unsigned char>(id)));
  }
  return out;
}

}  // namespace softshield
