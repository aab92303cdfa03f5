#include "focalmed/corpus_tagger.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "focalmed/errors.hpp"

namespace focalmed {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path, std::string_view what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + std::string(what) + " " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Calls `fn(record, lineno)` for every non-blank JSON line.
template <typename Fn>
void for_each_record(std::string_view content, Fn&& fn) {
    std::istringstream in{std::string(content)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw RecordError(ErrorCode::MalformedRecord, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!rec.is_object()) throw RecordError(ErrorCode::MalformedRecord, lineno, "record is not an object");
        fn(rec, lineno);
    }
}

std::string get_string(const json& rec, const char* key, std::size_t lineno) {
    auto it = rec.find(key);
    if (it == rec.end() || !it->is_string())
        throw RecordError(ErrorCode::MalformedRecord, lineno, std::string("missing or non-string field '") + key + "'");
    return it->get<std::string>();
}

std::vector<std::string> get_string_list(const json& rec, const char* key, std::size_t lineno) {
    std::vector<std::string> out;
    auto it = rec.find(key);
    if (it == rec.end() || it->is_null()) return out;
    if (!it->is_array()) throw RecordError(ErrorCode::MalformedRecord, lineno, std::string("'") + key + "' must be an array");
    for (const auto& v : *it) {
        if (!v.is_string())
            throw RecordError(ErrorCode::MalformedRecord, lineno, std::string("'") + key + "' must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

} // namespace

std::string_view to_string(Field f) noexcept {
    switch (f) {
        case Field::DocTitle: return "DOC_TITLE";
        case Field::SectionTitle: return "SECTION_TITLE";
        case Field::Breadcrumb: return "BREADCRUMB";
        case Field::Sentence: return "SENTENCE";
    }
    return "SENTENCE";
}

std::optional<Field> parse_field(std::string_view s) noexcept {
    for (auto f : kAllFields)
        if (to_string(f) == s) return f;
    return std::nullopt;
}

Field path_field(std::size_t index, std::size_t path_len) noexcept {
    return index + 1 == path_len ? Field::SectionTitle : Field::Breadcrumb;
}

TaggedSnippet RuleBasedTagger::tag(const Snippet& snippet) const {
    TaggedSnippet out;
    out.snippet = snippet;

    auto tag_text = [&](std::string_view text, Field field, std::size_t position) {
        const auto tokens = normalize(text);
        for (const auto& m : recognize(tokens, lexicon_)) {
            if (graph_.contains(m.concept_id)) out.concept_tags.push_back({m.concept_id, field, position});
        }
    };

    tag_text(snippet.doc_title, Field::DocTitle, 0);
    std::set<RelationType> structural;
    const auto& path = snippet.section_path;
    for (std::size_t i = 0; i < path.size(); ++i) {
        tag_text(path[i], path_field(i, path.size()), i);
        const auto tokens = normalize(path[i]);
        for (const auto& m : match_intents(tokens, intents_)) structural.insert(m.relation);
    }
    for (std::size_t i = 0; i < snippet.sentences.size(); ++i) tag_text(snippet.sentences[i], Field::Sentence, i);

    std::sort(out.concept_tags.begin(), out.concept_tags.end());
    out.concept_tags.erase(std::unique(out.concept_tags.begin(), out.concept_tags.end()), out.concept_tags.end());

    for (const auto& ct : out.concept_tags) {
        if (ct.field != Field::DocTitle && ct.field != Field::Breadcrumb) continue;
        for (auto rel : structural) out.relation_tags.push_back({ct.concept_id, rel});
    }
    std::sort(out.relation_tags.begin(), out.relation_tags.end());
    out.relation_tags.erase(std::unique(out.relation_tags.begin(), out.relation_tags.end()), out.relation_tags.end());
    return out;
}

TaggedSnippet tag_snippet(const Snippet& snippet, const KnowledgeGraph& graph, const Lexicon& lexicon,
                          const IntentPhraseTable& intents) {
    return RuleBasedTagger(graph, lexicon, intents).tag(snippet);
}

TagCorpusResult tag_corpus(std::span<const Snippet> corpus, const SnippetTagger& tagger, unsigned threads) {
    std::set<std::string_view> ids;
    for (const auto& s : corpus) {
        if (!ids.insert(s.snippet_id).second) throw Error(ErrorCode::DuplicateSnippetId, "duplicate snippet_id " + s.snippet_id);
    }

    TagCorpusResult result;
    result.tagged.resize(corpus.size());
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(corpus.size())));
    if (threads <= 1) {
        for (std::size_t i = 0; i < corpus.size(); ++i) result.tagged[i] = tagger.tag(corpus[i]);
    } else {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t i = w; i < corpus.size(); i += threads) result.tagged[i] = tagger.tag(corpus[i]);
            });
        }
    }

    for (auto f : kAllFields) result.concept_tag_counts[f] = 0;
    for (const auto& t : result.tagged) {
        for (const auto& ct : t.concept_tags) ++result.concept_tag_counts[ct.field];
        result.relation_tag_count += t.relation_tags.size();
    }
    return result;
}

CoverageReport coverage(std::span<const TaggedSnippet> auto_tags, std::span<const ManualTag> manual) {
    std::map<std::string, std::set<RelationTag>> auto_by_doc;
    for (const auto& t : auto_tags) {
        auto& set = auto_by_doc[t.snippet.doc_id];
        set.insert(t.relation_tags.begin(), t.relation_tags.end());
    }
    std::map<std::string, std::set<RelationTag>> manual_by_doc;
    for (const auto& m : manual) {
        if (!auto_by_doc.count(m.doc_id)) throw Error(ErrorCode::UnknownDocId, "manual tag for unknown doc_id " + m.doc_id);
        manual_by_doc[m.doc_id].insert(RelationTag{m.concept_id, m.relation_type});
    }
    if (manual_by_doc.empty()) throw Error(ErrorCode::NoJudgedDocs, "no document has manual relation tags");

    CoverageReport report;
    std::vector<double> values;
    std::size_t hits = 0;
    std::size_t auto_total = 0;
    for (const auto& [doc, wanted] : manual_by_doc) {
        const auto& got = auto_by_doc[doc];
        std::size_t found = 0;
        for (const auto& tag : wanted) found += got.count(tag);
        const double fraction = static_cast<double>(found) / static_cast<double>(wanted.size());
        report.per_doc[doc] = fraction;
        values.push_back(fraction);
        hits += found;
        auto_total += got.size();
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    report.median = n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
    report.precision = auto_total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(auto_total);
    return report;
}

namespace {

Snippet snippet_from(const json& rec, std::size_t lineno) {
    Snippet s;
    s.snippet_id = get_string(rec, "snippet_id", lineno);
    s.doc_id = get_string(rec, "doc_id", lineno);
    s.doc_title = get_string(rec, "doc_title", lineno);
    if (s.snippet_id.empty()) throw RecordError(ErrorCode::MalformedRecord, lineno, "empty snippet_id");
    if (s.doc_title.empty()) throw RecordError(ErrorCode::MalformedRecord, lineno, "empty doc_title");
    s.section_path = get_string_list(rec, "section_path", lineno);
    s.sentences = get_string_list(rec, "sentences", lineno);
    return s;
}

} // namespace

std::vector<Snippet> parse_corpus(std::string_view content) {
    std::vector<Snippet> out;
    for_each_record(content, [&](const json& rec, std::size_t lineno) { out.push_back(snippet_from(rec, lineno)); });
    return out;
}

std::vector<Snippet> load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path, "corpus file")); }

std::vector<ManualTag> parse_manual_tags(std::string_view content) {
    std::vector<ManualTag> out;
    for_each_record(content, [&](const json& rec, std::size_t lineno) {
        ManualTag t;
        t.doc_id = get_string(rec, "doc_id", lineno);
        t.concept_id = ConceptId(get_string(rec, "concept_id", lineno));
        const auto name = get_string(rec, "relation_type", lineno);
        auto rel = parse_relation_type(name);
        if (!rel || *rel == RelationType::IsA)
            throw RecordError(ErrorCode::MalformedRecord, lineno, "invalid relation_type '" + name + "'");
        t.relation_type = *rel;
        out.push_back(std::move(t));
    });
    return out;
}

std::vector<ManualTag> load_manual_tags(const std::filesystem::path& path) {
    return parse_manual_tags(read_file(path, "manual tag file"));
}

std::string to_jsonl(std::span<const TaggedSnippet> tagged) {
    std::string out;
    for (const auto& t : tagged) {
        json rec;
        rec["snippet_id"] = t.snippet.snippet_id;
        rec["doc_id"] = t.snippet.doc_id;
        rec["doc_title"] = t.snippet.doc_title;
        rec["section_path"] = t.snippet.section_path;
        rec["sentences"] = t.snippet.sentences;
        rec["concept_tags"] = json::array();
        for (const auto& c : t.concept_tags)
            rec["concept_tags"].push_back({{"concept_id", c.concept_id.value},
                                           {"field", std::string(to_string(c.field))},
                                           {"position", c.position}});
        rec["relation_tags"] = json::array();
        for (const auto& r : t.relation_tags)
            rec["relation_tags"].push_back(
                {{"concept_id", r.concept_id.value}, {"relation_type", std::string(to_string(r.relation_type))}});
        out += rec.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<TaggedSnippet> parse_tagged(std::string_view content) {
    std::vector<TaggedSnippet> out;
    for_each_record(content, [&](const json& rec, std::size_t lineno) {
        TaggedSnippet t;
        t.snippet = snippet_from(rec, lineno);
        try {
            for (const auto& c : rec.at("concept_tags")) {
                auto field = parse_field(c.at("field").get<std::string>());
                if (!field) throw RecordError(ErrorCode::MalformedRecord, lineno, "unknown field");
                t.concept_tags.push_back(
                    ConceptTag{ConceptId(c.at("concept_id").get<std::string>()), *field, c.at("position").get<std::size_t>()});
            }
            for (const auto& r : rec.at("relation_tags")) {
                auto rel = parse_relation_type(r.at("relation_type").get<std::string>());
                if (!rel) throw RecordError(ErrorCode::MalformedRecord, lineno, "unknown relation_type");
                t.relation_tags.push_back(RelationTag{ConceptId(r.at("concept_id").get<std::string>()), *rel});
            }
        } catch (const json::exception& e) {
            throw RecordError(ErrorCode::MalformedRecord, lineno, e.what());
        }
        std::sort(t.concept_tags.begin(), t.concept_tags.end());
        t.concept_tags.erase(std::unique(t.concept_tags.begin(), t.concept_tags.end()), t.concept_tags.end());
        std::sort(t.relation_tags.begin(), t.relation_tags.end());
        t.relation_tags.erase(std::unique(t.relation_tags.begin(), t.relation_tags.end()), t.relation_tags.end());
        out.push_back(std::move(t));
    });
    return out;
}

std::vector<TaggedSnippet> load_tagged(const std::filesystem::path& path) {
    return parse_tagged(read_file(path, "tagged corpus file"));
}

} // namespace focalmed
