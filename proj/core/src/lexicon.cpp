#include "focalmed/lexicon.hpp"

#include <algorithm>
#include <unordered_map>

namespace focalmed {

void Lexicon::add(const std::string& phrase, const ConceptId& concept_id, bool is_preferred) {
    if (phrase.empty()) return;
    auto [it, inserted] = entries_.try_emplace(phrase);
    auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), concept_id,
                                [](const LexiconEntry& e, const ConceptId& id) { return e.concept_id < id; });
    if (pos != list.end() && pos->concept_id == concept_id) {
        pos->is_preferred = pos->is_preferred || is_preferred;
    } else {
        list.insert(pos, LexiconEntry{concept_id, is_preferred});
    }
    if (inserted) {
        const auto tokens = static_cast<std::size_t>(std::count(phrase.begin(), phrase.end(), ' ')) + 1;
        max_phrase_len_ = std::max(max_phrase_len_, tokens);
        if (tokens == 1) {
            single_token_.insert(std::lower_bound(single_token_.begin(), single_token_.end(), phrase), phrase);
        }
    }
}

const std::vector<LexiconEntry>* Lexicon::lookup(std::string_view phrase) const {
    auto it = entries_.find(phrase);
    return it == entries_.end() ? nullptr : &it->second;
}

Lexicon build_lexicon(const KnowledgeGraph& graph) {
    Lexicon lex;
    for (const auto& c : graph.concepts()) {
        lex.add(normalize_phrase(c.preferred_label), c.id, true);
        for (const auto& syn : c.synonyms) lex.add(normalize_phrase(syn), c.id, false);
    }
    return lex;
}

std::vector<Mention> recognize(std::span<const Token> tokens, const Lexicon& lexicon,
                               const std::vector<bool>& available) {
    std::vector<Mention> out;
    const std::size_t n = tokens.size();
    const std::size_t max_len = lexicon.scan_len();
    std::size_t i = 0;
    while (i < n) {
        if (!available[i]) {
            ++i;
            continue;
        }
        std::size_t run = 0;
        while (i + run < n && available[i + run] && run < max_len) ++run;

        bool matched = false;
        for (std::size_t len = run; len >= 1; --len) {
            std::string phrase;
            for (std::size_t k = i; k < i + len; ++k) {
                if (k > i) phrase.push_back(' ');
                phrase += tokens[k].normalized;
            }
            if (const auto* entries = lexicon.lookup(phrase)) {
                for (const auto& e : *entries) out.push_back(Mention{e.concept_id, i, i + len, phrase, false});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return out;
}

std::vector<Mention> recognize(std::span<const Token> tokens, const Lexicon& lexicon) {
    return recognize(tokens, lexicon, std::vector<bool>(tokens.size(), true));
}

int correction_budget(std::size_t length) noexcept {
    if (length < 5) return 0;
    if (length <= 8) return 1;
    return 2;
}

int damerau_levenshtein(std::u32string_view a, std::u32string_view b) {
    const std::size_t la = a.size();
    const std::size_t lb = b.size();
    const int max_dist = static_cast<int>(la + lb);
    // d is (la + 2) x (lb + 2); row/column 0 hold the sentinel max_dist.
    const std::size_t width = lb + 2;
    std::vector<int> d((la + 2) * width, 0);
    auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * width + j]; };

    at(0, 0) = max_dist;
    for (std::size_t i = 0; i <= la; ++i) {
        at(i + 1, 0) = max_dist;
        at(i + 1, 1) = static_cast<int>(i);
    }
    for (std::size_t j = 0; j <= lb; ++j) {
        at(0, j + 1) = max_dist;
        at(1, j + 1) = static_cast<int>(j);
    }

    std::unordered_map<char32_t, std::size_t> last_row;
    for (std::size_t i = 1; i <= la; ++i) {
        std::size_t last_match_col = 0;
        for (std::size_t j = 1; j <= lb; ++j) {
            const auto found = last_row.find(b[j - 1]);
            const std::size_t k = found == last_row.end() ? 0 : found->second;
            const std::size_t l = last_match_col;
            int cost = 1;
            if (a[i - 1] == b[j - 1]) {
                cost = 0;
                last_match_col = j;
            }
            at(i + 1, j + 1) = std::min({
                at(i, j) + cost,
                at(i + 1, j) + 1,
                at(i, j + 1) + 1,
                at(k, l) + static_cast<int>(i - k - 1) + 1 + static_cast<int>(j - l - 1),
            });
        }
        last_row[a[i - 1]] = i;
    }
    return at(la + 1, lb + 1);
}

int damerau_levenshtein(std::string_view a, std::string_view b) {
    return damerau_levenshtein(utf8_decode(a), utf8_decode(b));
}

std::optional<Correction> correct(const Token& token, const Lexicon& lexicon) {
    const auto word = utf8_decode(token.normalized);
    const int budget = correction_budget(word.size());
    if (budget == 0) return std::nullopt;

    std::optional<Correction> best;
    // candidates are visited in lexicographic order, so strict < keeps the smallest on ties
    for (const auto& phrase : lexicon.single_token_phrases()) {
        const auto cand = utf8_decode(phrase);
        const auto len_gap = cand.size() > word.size() ? cand.size() - word.size() : word.size() - cand.size();
        if (len_gap > static_cast<std::size_t>(budget)) continue;
        const int dist = damerau_levenshtein(word, cand);
        if (dist <= budget && (!best || dist < best->distance)) best = Correction{phrase, dist};
    }
    return best;
}

} // namespace focalmed
