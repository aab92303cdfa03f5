#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focalmed/kg_store.hpp"
#include "focalmed/text.hpp"

namespace focalmed {

struct LexiconEntry {
    ConceptId concept_id;
    bool is_preferred = false;

    friend bool operator==(const LexiconEntry&, const LexiconEntry&) = default;
};

/// Normalized label/synonym phrase -> concepts. Immutable once built.
class Lexicon {
public:
    /// Longest phrase considered by the recognizer scan.
    static constexpr std::size_t kMaxScanTokens = 6;

    Lexicon() = default;

    /// Adds `phrase` (already normalized) for `concept`. Entries of one phrase
    /// are kept ordered by concept id; a repeated (phrase, concept) pair keeps
    /// the preferred flag if either insertion was preferred.
    void add(const std::string& phrase, const ConceptId& concept_id, bool is_preferred);

    /// nullptr when absent.
    const std::vector<LexiconEntry>* lookup(std::string_view phrase) const;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Token count of the longest entry phrase.
    std::size_t max_phrase_len() const noexcept { return max_phrase_len_; }
    std::size_t scan_len() const noexcept { return std::min(max_phrase_len_, kMaxScanTokens); }

    const std::map<std::string, std::vector<LexiconEntry>, std::less<>>& entries() const noexcept { return entries_; }

    /// Phrases made of a single token, in lexicographic order; the correction candidates.
    const std::vector<std::string>& single_token_phrases() const noexcept { return single_token_; }

private:
    std::map<std::string, std::vector<LexiconEntry>, std::less<>> entries_;
    std::vector<std::string> single_token_;
    std::size_t max_phrase_len_ = 0;
};

struct Mention {
    ConceptId concept_id;
    std::size_t begin = 0;  ///< token index
    std::size_t end = 0;    ///< token index, exclusive
    std::string matched_text;
    bool corrected = false;

    friend bool operator==(const Mention&, const Mention&) = default;
};

struct Correction {
    std::string phrase;
    int distance = 0;

    friend bool operator==(const Correction&, const Correction&) = default;
};

/// One entry per distinct normalized preferred label or synonym.
Lexicon build_lexicon(const KnowledgeGraph& graph);

/// Greedy left-to-right longest match. At each position spans of
/// `scan_len()` down to 1 tokens are tried; a hit emits one mention per
/// concept of the phrase (ambiguous phrases share a span) and the scan
/// resumes after it. Output is ordered by start token, then concept id.
std::vector<Mention> recognize(std::span<const Token> tokens, const Lexicon& lexicon);

/// Same scan restricted to tokens where `available[i]` is true; spans never
/// cross an unavailable token.
std::vector<Mention> recognize(std::span<const Token> tokens, const Lexicon& lexicon,
                               const std::vector<bool>& available);

/// Edit budget for a token of `length` code points: <5 -> 0, 5..8 -> 1, >=9 -> 2.
int correction_budget(std::size_t length) noexcept;

/// Nearest single-token lexicon phrase by Damerau-Levenshtein distance within
/// the length budget. Ties go to the lexicographically smaller phrase.
std::optional<Correction> correct(const Token& token, const Lexicon& lexicon);

/// Unrestricted Damerau-Levenshtein distance (adjacent transpositions allowed,
/// substrings may be edited again) over code points.
int damerau_levenshtein(std::u32string_view a, std::u32string_view b);
int damerau_levenshtein(std::string_view a, std::string_view b);

} // namespace focalmed
