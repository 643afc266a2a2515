#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace pixeldoc {

using TokenId = int;

// Fixed vocabulary layout: 256 byte tokens, then the special tokens, then
// 1024 reserved patch tokens. The layout never changes between runs, so
// serialized token streams are portable.
namespace tok {
inline constexpr TokenId kByteCount = 256;
inline constexpr TokenId kPad = 256;
inline constexpr TokenId kBos = 257;
inline constexpr TokenId kEnd = 258;  // rendered "</s>"
inline constexpr TokenId kMask = 259;
inline constexpr TokenId kBb = 260;
inline constexpr TokenId kQa = 261;
inline constexpr TokenId kMae = 262;
inline constexpr TokenId kMdtg = 263;
inline constexpr TokenId kSpecialCount = 8;
inline constexpr TokenId kFirstPatch = kByteCount + kSpecialCount;  // 264
inline constexpr TokenId kPatchCount = 1024;
inline constexpr TokenId kVocabSize = kFirstPatch + kPatchCount;  // 1288
}  // namespace tok

// UTF-8 bytes map 1:1 to byte-token ids; no BOS/END are added implicitly.
std::vector<TokenId> encode(std::string_view text);

// Inverse of encode on byte tokens. Byte runs that are not valid UTF-8 come
// back with U+FFFD replacements; specials render as bracketed names (END as
// "</s>"). Unknown ids are an error.
std::string decode(const std::vector<TokenId>& ids);

// Canonical display name of a single token id.
std::string token_name(TokenId id);

// JSON manifest mapping every token name to its id.
std::string vocabulary_json();

}  // namespace pixeldoc
