#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focalmed/kg_store.hpp"
#include "focalmed/lexicon.hpp"
#include "focalmed/query_parser.hpp"

namespace focalmed {

enum class Field { DocTitle, SectionTitle, Breadcrumb, Sentence };

inline constexpr std::array<Field, 4> kAllFields = {Field::DocTitle, Field::SectionTitle, Field::Breadcrumb,
                                                   Field::Sentence};

std::string_view to_string(Field f) noexcept;
std::optional<Field> parse_field(std::string_view s) noexcept;

/// A retrievable unit of a literature source: where it sits (title and
/// breadcrumb path, deepest section last) plus its pre-split sentences.
struct Snippet {
    std::string snippet_id;
    std::string doc_id;
    std::string doc_title;
    std::vector<std::string> section_path;
    std::vector<std::string> sentences;

    friend bool operator==(const Snippet&, const Snippet&) = default;
};

struct ConceptTag {
    ConceptId concept_id;
    Field field = Field::DocTitle;
    std::size_t position = 0;

    friend auto operator<=>(const ConceptTag&, const ConceptTag&) = default;
    friend bool operator==(const ConceptTag&, const ConceptTag&) = default;
};

struct RelationTag {
    ConceptId concept_id;
    RelationType relation_type = RelationType::HasTreatment;

    friend auto operator<=>(const RelationTag&, const RelationTag&) = default;
    friend bool operator==(const RelationTag&, const RelationTag&) = default;
};

struct TaggedSnippet {
    Snippet snippet;
    std::vector<ConceptTag> concept_tags;    ///< sorted, unique
    std::vector<RelationTag> relation_tags;  ///< sorted, unique

    friend bool operator==(const TaggedSnippet&, const TaggedSnippet&) = default;
};

/// Field a section_path element is tagged under: the last one is the section title.
Field path_field(std::size_t index, std::size_t path_len) noexcept;

/// Snippet -> TaggedSnippet; implementations must be pure and thread-safe.
class SnippetTagger {
public:
    virtual ~SnippetTagger() = default;
    virtual TaggedSnippet tag(const Snippet& snippet) const = 0;
};

/// Dictionary tagger. Concept tags come from lexicon mentions in every field.
/// An intent phrase in the deepest section title or in any breadcrumb yields a
/// relation tag for each concept tagged in the doc title or a breadcrumb.
class RuleBasedTagger final : public SnippetTagger {
public:
    RuleBasedTagger(const KnowledgeGraph& graph, const Lexicon& lexicon, const IntentPhraseTable& intents)
        : graph_(graph), lexicon_(lexicon), intents_(intents) {}

    TaggedSnippet tag(const Snippet& snippet) const override;

private:
    const KnowledgeGraph& graph_;
    const Lexicon& lexicon_;
    const IntentPhraseTable& intents_;
};

TaggedSnippet tag_snippet(const Snippet& snippet, const KnowledgeGraph& graph, const Lexicon& lexicon,
                          const IntentPhraseTable& intents);

struct TagCorpusResult {
    std::vector<TaggedSnippet> tagged;  ///< input order
    std::map<Field, std::size_t> concept_tag_counts;
    std::size_t relation_tag_count = 0;
};

/// Tags every snippet (on `threads` workers) and restores input order.
/// Throws DuplicateSnippetId.
TagCorpusResult tag_corpus(std::span<const Snippet> corpus, const SnippetTagger& tagger, unsigned threads = 1);

struct ManualTag {
    std::string doc_id;
    ConceptId concept_id;
    RelationType relation_type = RelationType::HasTreatment;
};

struct CoverageReport {
    std::map<std::string, double> per_doc;
    double median = 0.0;
    /// Informational: |auto ∩ manual| / |auto| over judged docs (0 when auto is empty).
    double precision = 0.0;
};

/// Recall of manual relation tags per document, aggregated over the doc's
/// snippets; docs without manual tags are skipped. Throws UnknownDocId and
/// NoJudgedDocs.
CoverageReport coverage(std::span<const TaggedSnippet> auto_tags, std::span<const ManualTag> manual);

std::vector<Snippet> parse_corpus(std::string_view content);
std::vector<Snippet> load_corpus(const std::filesystem::path& path);
std::vector<ManualTag> parse_manual_tags(std::string_view content);
std::vector<ManualTag> load_manual_tags(const std::filesystem::path& path);

/// One JSON object per tagged snippet (corpus fields plus concept_tags/relation_tags).
std::string to_jsonl(std::span<const TaggedSnippet> tagged);
std::vector<TaggedSnippet> parse_tagged(std::string_view content);
std::vector<TaggedSnippet> load_tagged(const std::filesystem::path& path);

} // namespace focalmed
