#pragma once

// Word-level tokenizer for template text. Words are lower-cased alphanumeric
// runs, punctuation separates words and is dropped, and every numeral is
// replaced by a bucket token `<num±b>` with b = round(4 * value) clamped to
// [-17, 17]. The vocabulary is built once from a corpus; unseen words map to
// <unk>.

#include "hyperload/cats_template.hpp"
#include "hyperload/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hyperload {

struct TextTokenSequence {
    std::vector<int> ids;

    std::size_t size() const { return ids.size(); }
    friend bool operator==(const TextTokenSequence&, const TextTokenSequence&) = default;
};

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kNumBucketLimit = 17;

inline std::string number_bucket(double value) {
    long b = std::lround(value * 4.0);
    b = std::clamp<long>(b, -kNumBucketLimit, kNumBucketLimit);
    return std::string("<num") + (b < 0 ? "-" : "+") + std::to_string(std::labs(b)) + ">";
}

/// Splits text into surface tokens (words, bucketed numerals, `<...>` specials).
inline std::vector<std::string> lex(std::string_view text) {
    std::vector<std::string> out;
    const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '<') {
            const std::size_t close = text.find('>', i);
            if (close != std::string_view::npos) {
                std::string_view inner = text.substr(i + 1, close - i - 1);
                const bool special = !inner.empty() && std::all_of(inner.begin(), inner.end(), [&](char ch) {
                    return is_word(ch) || ch == '+' || ch == '-';
                });
                if (special) {
                    out.emplace_back(text.substr(i, close - i + 1));
                    i = close + 1;
                    continue;
                }
            }
            ++i;
            continue;
        }
        const bool prev_word = i > 0 && is_word(text[i - 1]);
        const bool signed_number = (c == '-' || c == '+') && i + 1 < text.size() && is_digit(text[i + 1]) && !prev_word;
        if (is_digit(c) || signed_number) {
            std::size_t j = i + (signed_number ? 1 : 0);
            while (j < text.size() && is_digit(text[j])) {
                ++j;
            }
            if (j + 1 < text.size() && text[j] == '.' && is_digit(text[j + 1])) {
                ++j;
                while (j < text.size() && is_digit(text[j])) {
                    ++j;
                }
            }
            if (j < text.size() && (std::isalpha(static_cast<unsigned char>(text[j])) != 0 || text[j] == '_')) {
                // alphanumeric word that starts with a digit, e.g. "5min"
                while (j < text.size() && is_word(text[j])) {
                    ++j;
                }
                std::string w(text.substr(i, j - i));
                std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::tolower(ch); });
                out.push_back(std::move(w));
            } else {
                out.push_back(number_bucket(std::stod(std::string(text.substr(i, j - i)))));
            }
            i = j;
            continue;
        }
        if (is_word(c)) {
            std::size_t j = i;
            while (j < text.size() && is_word(text[j])) {
                ++j;
            }
            std::string w(text.substr(i, j - i));
            std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::tolower(ch); });
            out.push_back(std::move(w));
            i = j;
            continue;
        }
        ++i;
    }
    return out;
}

class Vocabulary {
public:
    Vocabulary() { reset_specials(); }

    /// Specials and all numeral buckets first, then corpus words in sorted order.
    static Vocabulary build(const std::vector<std::string>& corpus) {
        Vocabulary v;
        std::set<std::string> words;
        for (const auto& text : corpus) {
            for (auto& tok : lex(text)) {
                words.insert(std::move(tok));
            }
        }
        for (const auto& w : words) {
            v.add(w);
        }
        return v;
    }

    static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
        Vocabulary v;
        v.tokens_.clear();
        v.index_.clear();
        for (const auto& t : tokens) {
            v.add(t);
        }
        if (v.size() < 2 || v.tokens_[kPadId] != "<pad>" || v.tokens_[kUnkId] != "<unk>") {
            throw CheckpointError("vocabulary must start with <pad>, <unk>");
        }
        return v;
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    int id_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnkId : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(tokens_.size()));
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    TextTokenSequence tokenize(std::string_view text) const {
        if (text.empty()) {
            throw ConfigError("tokenize: empty text");
        }
        TextTokenSequence seq;
        for (const auto& t : lex(text)) {
            seq.ids.push_back(id_of(t));
        }
        if (seq.ids.empty()) {
            throw ConfigError("tokenize: text contains no tokens");
        }
        return seq;
    }

    /// Canonical text: tokens joined by single spaces. tokenize(detokenize(s)) == s.
    std::string detokenize(const TextTokenSequence& seq) const {
        std::string out;
        for (int id : seq.ids) {
            if (!out.empty()) {
                out.push_back(' ');
            }
            out += token(id);
        }
        return out;
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    void reset_specials() {
        tokens_.clear();
        index_.clear();
        add("<pad>");
        add("<unk>");
        for (int b = -kNumBucketLimit; b <= kNumBucketLimit; ++b) {
            add(std::string("<num") + (b < 0 ? "-" : "+") + std::to_string(std::abs(b)) + ">");
        }
    }

    void add(const std::string& token) {
        if (index_.emplace(token, static_cast<int>(tokens_.size())).second) {
            tokens_.push_back(token);
        }
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

/**
 * Tokenizes a template within a token budget. When over budget, tokens are
 * removed from the end of Background first, then Trend, then Statistics.
 * Instruction is never shortened; a budget smaller than the instruction
 * alone is a configuration error.
 */
inline TextTokenSequence tokenize_template(const Vocabulary& vocab, const CatsTemplate& tpl, std::size_t budget) {
    auto section = [&](const std::string& label, const std::string& body) {
        std::vector<int> ids;
        for (const auto& t : lex(label + " " + body)) {
            ids.push_back(vocab.id_of(t));
        }
        return ids;
    };
    std::vector<int> background = section("Background:", tpl.background);
    std::vector<int> instruction = section("Instruction:", tpl.instruction);
    std::vector<int> trend = section("Trend:", tpl.trend);
    std::vector<int> statistics = section("Statistics:", tpl.statistics);
    if (instruction.size() > budget) {
        throw ConfigError("token budget " + std::to_string(budget) + " is smaller than the instruction (" +
                          std::to_string(instruction.size()) + " tokens)");
    }
    std::size_t total = background.size() + instruction.size() + trend.size() + statistics.size();
    for (auto* sec : {&background, &trend, &statistics}) {
        if (total <= budget) {
            break;
        }
        const std::size_t cut = std::min(sec->size(), total - budget);
        sec->resize(sec->size() - cut);
        total -= cut;
    }
    TextTokenSequence seq;
    for (const auto* sec : {&background, &instruction, &trend, &statistics}) {
        seq.ids.insert(seq.ids.end(), sec->begin(), sec->end());
    }
    return seq;
}

} // namespace hyperload
