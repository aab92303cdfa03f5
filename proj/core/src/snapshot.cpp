// FMIX index snapshot.
//
// Layout (all integers little-endian):
//   "FMIX" | u32 version | repeated { u32 section tag | u64 payload bytes | payload }
// Strings are u32 length + bytes. Unknown section tags are skipped on load.

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "focalmed/errors.hpp"
#include "focalmed/index_retrieval.hpp"

namespace focalmed {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'I', 'X'};

enum SectionTag : std::uint32_t {
    kSnippets = 1,
    kRelation = 2,
    kStructural = 3,
    kConcept = 4,
    kText = 5,
    kDocLength = 6,
};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    template <typename T>
    void count(const T& container) {
        u32(static_cast<std::uint32_t>(container.size()));
    }
    std::string& data() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    std::uint64_t u64() {
        const auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }
    std::string str() {
        const auto n = u32();
        return std::string(take(n));
    }
    std::string_view bytes(std::size_t n) { return take(n); }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    std::string_view take(std::size_t n) {
        if (data_.size() - pos_ < n) throw Error(ErrorCode::BadSnapshot, "snapshot truncated");
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

RelationType read_relation(Reader& r) {
    const auto v = r.u8();
    if (v >= std::size(kAllRelationTypes)) throw Error(ErrorCode::BadSnapshot, "bad relation type in snapshot");
    return static_cast<RelationType>(v);
}

Field read_field(Reader& r) {
    const auto v = r.u8();
    if (v >= kAllFields.size()) throw Error(ErrorCode::BadSnapshot, "bad field in snapshot");
    return static_cast<Field>(v);
}

void emit(std::ostream& out, SectionTag tag, Writer& section) {
    Writer header;
    header.u32(tag);
    header.u64(section.data().size());
    out.write(header.data().data(), static_cast<std::streamsize>(header.data().size()));
    out.write(section.data().data(), static_cast<std::streamsize>(section.data().size()));
}

} // namespace

void save_snapshot(const IndexSet& ix, std::ostream& out) {
    if (!ix.built()) throw Error(ErrorCode::IndexNotBuilt, "cannot snapshot an unbuilt index");
    out.write(kMagic, 4);
    Writer version;
    version.u32(kSnapshotVersion);
    out.write(version.data().data(), 4);

    Writer snippets;
    snippets.count(ix.snippets_);
    for (const auto& t : ix.snippets_) {
        const auto& s = t.snippet;
        snippets.str(s.snippet_id);
        snippets.str(s.doc_id);
        snippets.str(s.doc_title);
        snippets.count(s.section_path);
        for (const auto& p : s.section_path) snippets.str(p);
        snippets.count(s.sentences);
        for (const auto& p : s.sentences) snippets.str(p);
        snippets.count(t.concept_tags);
        for (const auto& c : t.concept_tags) {
            snippets.str(c.concept_id.value);
            snippets.u8(static_cast<std::uint8_t>(c.field));
            snippets.u32(static_cast<std::uint32_t>(c.position));
        }
        snippets.count(t.relation_tags);
        for (const auto& r : t.relation_tags) {
            snippets.str(r.concept_id.value);
            snippets.u8(static_cast<std::uint8_t>(r.relation_type));
        }
    }
    emit(out, kSnippets, snippets);

    Writer relation;
    relation.count(ix.relation_);
    for (const auto& [key, docs] : ix.relation_) {
        relation.str(key.first.value);
        relation.u8(static_cast<std::uint8_t>(key.second));
        relation.count(docs);
        for (auto d : docs) relation.u32(d);
    }
    emit(out, kRelation, relation);

    Writer structural;
    structural.count(ix.structural_);
    for (const auto& [rel, docs] : ix.structural_) {
        structural.u8(static_cast<std::uint8_t>(rel));
        structural.count(docs);
        for (auto d : docs) structural.u32(d);
    }
    emit(out, kStructural, structural);

    Writer concept_section;
    concept_section.count(ix.concept_);
    for (const auto& [id, postings] : ix.concept_) {
        concept_section.str(id.value);
        concept_section.count(postings);
        for (const auto& p : postings) {
            concept_section.u32(p.doc);
            concept_section.u8(static_cast<std::uint8_t>(p.field));
            concept_section.u32(p.frequency);
        }
    }
    emit(out, kConcept, concept_section);

    Writer text;
    text.count(ix.text_);
    for (const auto& [term, postings] : ix.text_) {
        text.str(term);
        text.count(postings);
        for (const auto& p : postings) {
            text.u32(p.doc);
            text.u32(p.tf);
        }
    }
    emit(out, kText, text);

    Writer lengths;
    lengths.count(ix.doc_len_);
    for (auto len : ix.doc_len_) lengths.u32(len);
    emit(out, kDocLength, lengths);

    if (!out) throw Error(ErrorCode::Io, "failed writing snapshot");
}

IndexSet load_snapshot(std::istream& in) {
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 8 || std::memcmp(data.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::BadSnapshot, "not an FMIX snapshot");
    Reader header(std::string_view(data).substr(4, 4));
    const auto version = header.u32();
    if (version != kSnapshotVersion)
        throw Error(ErrorCode::BadSnapshot, "unsupported snapshot version " + std::to_string(version));

    IndexSet ix;
    Reader body(std::string_view(data).substr(8));
    std::uint32_t seen = 0;
    auto check_doc = [&](std::uint32_t d) {
        if (d >= ix.snippets_.size()) throw Error(ErrorCode::BadSnapshot, "posting references unknown snippet");
        return d;
    };

    while (!body.done()) {
        const auto tag = body.u32();
        const auto len = body.u64();
        Reader r(body.bytes(static_cast<std::size_t>(len)));
        if (tag < 32) {
            if (seen & (1u << tag)) throw Error(ErrorCode::BadSnapshot, "repeated snapshot section");
            seen |= 1u << tag;
        }

        switch (tag) {
            case kSnippets: {
                const auto n = r.u32();
                for (std::uint32_t i = 0; i < n; ++i) {
                    TaggedSnippet t;
                    t.snippet.snippet_id = r.str();
                    t.snippet.doc_id = r.str();
                    t.snippet.doc_title = r.str();
                    for (auto k = r.u32(); k > 0; --k) t.snippet.section_path.push_back(r.str());
                    for (auto k = r.u32(); k > 0; --k) t.snippet.sentences.push_back(r.str());
                    for (auto k = r.u32(); k > 0; --k) {
                        ConceptTag c;
                        c.concept_id = ConceptId(r.str());
                        c.field = read_field(r);
                        c.position = r.u32();
                        t.concept_tags.push_back(std::move(c));
                    }
                    for (auto k = r.u32(); k > 0; --k) {
                        RelationTag rt;
                        rt.concept_id = ConceptId(r.str());
                        rt.relation_type = read_relation(r);
                        t.relation_tags.push_back(std::move(rt));
                    }
                    ix.snippets_.push_back(std::move(t));
                }
                break;
            }
            case kRelation: {
                for (auto n = r.u32(); n > 0; --n) {
                    ConceptId id(r.str());
                    const auto rel = read_relation(r);
                    auto& docs = ix.relation_[{std::move(id), rel}];
                    for (auto k = r.u32(); k > 0; --k) docs.push_back(check_doc(r.u32()));
                }
                break;
            }
            case kStructural: {
                for (auto n = r.u32(); n > 0; --n) {
                    auto& docs = ix.structural_[read_relation(r)];
                    for (auto k = r.u32(); k > 0; --k) docs.push_back(check_doc(r.u32()));
                }
                break;
            }
            case kConcept: {
                for (auto n = r.u32(); n > 0; --n) {
                    auto& postings = ix.concept_[ConceptId(r.str())];
                    for (auto k = r.u32(); k > 0; --k) {
                        ConceptPosting p;
                        p.doc = check_doc(r.u32());
                        p.field = read_field(r);
                        p.frequency = r.u32();
                        postings.push_back(p);
                    }
                }
                break;
            }
            case kText: {
                for (auto n = r.u32(); n > 0; --n) {
                    auto& postings = ix.text_[r.str()];
                    for (auto k = r.u32(); k > 0; --k) {
                        TextPosting p;
                        p.doc = check_doc(r.u32());
                        p.tf = r.u32();
                        postings.push_back(p);
                    }
                }
                break;
            }
            case kDocLength: {
                for (auto n = r.u32(); n > 0; --n) ix.doc_len_.push_back(r.u32());
                break;
            }
            default:
                continue;  // section from a newer writer
        }
        if (!r.done()) throw Error(ErrorCode::BadSnapshot, "trailing bytes in snapshot section " + std::to_string(tag));
    }

    constexpr std::uint32_t required = (1u << kSnippets) | (1u << kRelation) | (1u << kStructural) |
                                       (1u << kConcept) | (1u << kText) | (1u << kDocLength);
    if ((seen & required) != required) throw Error(ErrorCode::BadSnapshot, "snapshot is missing sections");
    if (ix.doc_len_.size() != ix.snippets_.size()) throw Error(ErrorCode::BadSnapshot, "document length table mismatch");
    ix.finalize();
    return ix;
}

void save_snapshot(const IndexSet& ix, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write snapshot " + path.string());
    save_snapshot(ix, out);
}

IndexSet load_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read snapshot " + path.string());
    return load_snapshot(in);
}

} // namespace focalmed
