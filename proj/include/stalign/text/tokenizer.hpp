#pragma once

// Word-level tokenizer with byte fallback.
//
// Id layout: 0 [PAD], 1 [UNK], 2 [CLS], 3 [SEP], 4..259 the 256 byte tokens
// "<0x00>".."<0xFF>", then corpus words. Any string tokenizes: a word missing
// from the vocabulary is spelled out as the byte tokens of its UTF-8 encoding.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stalign::text {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kFirstByte = 4;
inline constexpr TokenId kFirstWord = kFirstByte + 256;

class Vocabulary {
public:
    /// Specials and byte tokens only.
    Vocabulary();

    /// Adds every word occurring at least `min_count` times, in order of
    /// descending count then lexicographic.
    static Vocabulary build(const std::vector<std::string>& texts, std::size_t min_count = 2);
    /// One token per line, line number = id, specials first.
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    /// Word id, if the word is in the vocabulary.
    bool lookup(std::string_view word, TokenId& id) const;
    TokenId add_word(const std::string& word);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct TokenizedText {
    std::vector<TokenId> ids;                  // [CLS] ... [SEP] [PAD]...
    std::vector<unsigned char> attention_mask;  // 1 on non-[PAD]
    std::size_t max_len = 128;

    std::size_t length() const { return ids.size(); }
    /// Copy with trailing [PAD] positions removed.
    TokenizedText trimmed() const;
};

/// Lowercases, splits on whitespace, and splits ASCII punctuation into
/// separate words.
std::vector<std::string> split_words(std::string_view text);

/// Wraps in [CLS]/[SEP], truncates to max_len (keeping both), pads to max_len.
TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len = 128);

}  // namespace stalign::text
