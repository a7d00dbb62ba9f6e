#include "stalign/text/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>

#include "stalign/errors.hpp"

namespace stalign::text {

namespace {

std::string byte_token(unsigned b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", b);
    return buf;
}

}  // namespace

Vocabulary::Vocabulary() {
    tokens_ = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    for (unsigned b = 0; b < 256; ++b) tokens_.push_back(byte_token(b));
    for (TokenId i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
        for (auto& w : split_words(t)) ++counts[w];
    std::vector<std::pair<std::string, std::size_t>> words(counts.begin(), counts.end());
    std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [w, c] : words) {
        if (c >= min_count) v.add_word(w);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open vocabulary " + path.string());
    Vocabulary base;
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        if (lineno < kFirstWord && line != base.tokens_[lineno]) {
            throw ParseError(path.string() + ":" + std::to_string(lineno + 1) + ": expected reserved token " +
                             base.tokens_[lineno] + ", got '" + line + "'");
        }
        if (line.empty() || !v.index_.emplace(line, static_cast<TokenId>(v.tokens_.size())).second) {
            throw ParseError(path.string() + ":" + std::to_string(lineno + 1) + ": empty or duplicate token");
        }
        v.tokens_.push_back(line);
        ++lineno;
    }
    if (v.tokens_.size() < kFirstWord) {
        throw ParseError(path.string() + ": vocabulary truncated after " + std::to_string(lineno) + " lines");
    }
    return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write vocabulary " + path.string());
    for (const auto& t : tokens_) f << t << '\n';
    if (!f) throw IoError("write failed for " + path.string());
}

bool Vocabulary::lookup(std::string_view word, TokenId& id) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end() || it->second < kFirstWord) return false;
    id = it->second;
    return true;
}

TokenId Vocabulary::add_word(const std::string& word) {
    if (const auto it = index_.find(word); it != index_.end()) return it->second;
    if (word.empty() || word.find_first_of(" \t\r\n") != std::string::npos) {
        throw ContractError("vocabulary: word must be non-empty and free of whitespace");
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(word);
    index_.emplace(word, id);
    return id;
}

TokenizedText TokenizedText::trimmed() const {
    TokenizedText t = *this;
    while (!t.ids.empty() && t.ids.back() == kPad) {
        t.ids.pop_back();
        t.attention_mask.pop_back();
    }
    return t;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    if (max_len < 2) throw ContractError("tokenize: max_len must leave room for [CLS] and [SEP]");
    TokenizedText out;
    out.max_len = max_len;
    out.ids.push_back(kCls);
    for (const auto& w : split_words(text)) {
        TokenId id;
        if (vocab.lookup(w, id)) {
            out.ids.push_back(id);
        } else {
            for (unsigned char b : w) out.ids.push_back(kFirstByte + b);
        }
    }
    if (out.ids.size() > max_len - 1) out.ids.resize(max_len - 1);
    out.ids.push_back(kSep);
    out.attention_mask.assign(out.ids.size(), 1);
    out.ids.resize(max_len, kPad);
    out.attention_mask.resize(max_len, 0);
    return out;
}

}  // namespace stalign::text
