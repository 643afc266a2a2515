#include "pixeldoc/tokenizer.hpp"

#include <cstdio>
#include <map>

#include "json.hpp"
#include "pixeldoc/common.hpp"
#include "pixeldoc/utf8.hpp"

namespace pixeldoc {

namespace {

const char* special_name(TokenId id) {
    switch (id) {
        case tok::kPad: return "[PAD]";
        case tok::kBos: return "[BOS]";
        case tok::kEnd: return "</s>";
        case tok::kMask: return "[MASK]";
        case tok::kBb: return "[BB]";
        case tok::kQa: return "[QA]";
        case tok::kMae: return "[MAE]";
        case tok::kMdtg: return "[MDTG]";
        default: return nullptr;
    }
}

// Re-encodes a raw byte run as UTF-8, replacing invalid sequences.
void append_sanitized(std::string& out, std::string_view bytes) {
    std::size_t i = 0;
    while (i < bytes.size()) utf8_append(out, utf8_next(bytes, i));
}

}  // namespace

std::vector<TokenId> encode(std::string_view text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char b : text) ids.push_back(static_cast<TokenId>(b));
    return ids;
}

std::string decode(const std::vector<TokenId>& ids) {
    std::string out;
    std::string run;  // pending raw bytes, flushed at special-token borders
    auto flush = [&] {
        if (!run.empty()) {
            append_sanitized(out, run);
            run.clear();
        }
    };
    for (TokenId id : ids) {
        if (id < 0 || id >= tok::kVocabSize)
            throw_data("token id " + std::to_string(id) + " is outside the vocabulary");
        if (id < tok::kByteCount) {
            run.push_back(static_cast<char>(id));
        } else {
            flush();
            out += token_name(id);
        }
    }
    flush();
    return out;
}

std::string token_name(TokenId id) {
    if (id < 0 || id >= tok::kVocabSize)
        throw_data("token id " + std::to_string(id) + " is outside the vocabulary");
    if (id < tok::kByteCount) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "byte_0x%02X", static_cast<unsigned>(id));
        return buf;
    }
    if (const char* name = special_name(id)) return name;
    return "[PATCH_" + std::to_string(id - tok::kFirstPatch) + "]";
}

std::string vocabulary_json() {
    nlohmann::json names;
    for (TokenId id = 0; id < tok::kVocabSize; ++id) names[token_name(id)] = id;
    nlohmann::json manifest;
    manifest["vocab_size"] = tok::kVocabSize;
    manifest["tokens"] = std::move(names);
    return manifest.dump(2);
}

}  // namespace pixeldoc
