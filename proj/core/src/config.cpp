#include <charconv>
#include <fstream>
#include <sstream>

#include "focalmed/errors.hpp"
#include "focalmed/index_retrieval.hpp"

namespace focalmed {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Calls fn(key, value, lineno) for each key=value line; '#' comments, blank lines skipped.
template <typename Fn>
void for_each_setting(std::string_view content, Fn&& fn) {
    std::istringstream in{std::string(content)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto line = trim(std::string_view(raw).substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw RecordError(ErrorCode::BadConfig, lineno, "expected key=value");
        fn(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)), lineno);
    }
}

double to_double(const std::string& v, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw RecordError(ErrorCode::BadConfig, lineno, "not a number: '" + v + "'");
    }
}

double to_non_negative(const std::string& v, std::size_t lineno) {
    const double d = to_double(v, lineno);
    if (!(d >= 0.0)) throw RecordError(ErrorCode::BadConfig, lineno, "value must be >= 0: '" + v + "'");
    return d;
}

std::size_t to_count(const std::string& v, std::size_t lineno) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
        throw RecordError(ErrorCode::BadConfig, lineno, "not a non-negative integer: '" + v + "'");
    return out;
}

bool to_bool(const std::string& v, std::size_t lineno) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw RecordError(ErrorCode::BadConfig, lineno, "not a boolean: '" + v + "'");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

RetrievalConfig parse_retrieval_config(std::string_view content) {
    RetrievalConfig cfg;
    for_each_setting(content, [&](const std::string& key, const std::string& value, std::size_t lineno) {
        if (key.rfind("parser.", 0) == 0) return;
        if (key == "w_r") {
            cfg.w_relation = to_non_negative(value, lineno);
        } else if (key == "w_c") {
            cfg.w_concept = to_non_negative(value, lineno);
        } else if (key == "w_t") {
            cfg.w_text = to_non_negative(value, lineno);
        } else if (key.rfind("field.", 0) == 0) {
            auto field = parse_field(key.substr(6));
            if (!field) throw RecordError(ErrorCode::BadConfig, lineno, "unknown field '" + key.substr(6) + "'");
            cfg.field_weights[static_cast<std::size_t>(*field)] = to_non_negative(value, lineno);
        } else if (key == "bm25.k1") {
            cfg.bm25.k1 = to_non_negative(value, lineno);
        } else if (key == "bm25.b") {
            cfg.bm25.b = to_non_negative(value, lineno);
            if (cfg.bm25.b > 1.0) throw RecordError(ErrorCode::BadConfig, lineno, "bm25.b must be in [0, 1]");
        } else if (key == "min_results") {
            cfg.min_results = to_count(value, lineno);
        } else if (key == "max_relax_steps") {
            cfg.max_relax_steps = to_count(value, lineno);
        } else if (key == "limit") {
            cfg.limit = to_count(value, lineno);
            if (cfg.limit < 1) throw RecordError(ErrorCode::BadConfig, lineno, "limit must be >= 1");
        } else if (key == "parallel_subqueries") {
            cfg.parallel_subqueries = to_bool(value, lineno);
        } else {
            throw RecordError(ErrorCode::BadConfig, lineno, "unknown setting '" + key + "'");
        }
    });
    return cfg;
}

RetrievalConfig load_retrieval_config(const std::filesystem::path& path) { return parse_retrieval_config(read_file(path)); }

ParserOptions parse_parser_options(std::string_view content) {
    ParserOptions opts;
    for_each_setting(content, [&](const std::string& key, const std::string& value, std::size_t lineno) {
        if (key.rfind("parser.", 0) != 0) return;
        const auto name = key.substr(7);
        if (name == "corrected_weight") {
            opts.corrected_weight = to_double(value, lineno);
            if (!(opts.corrected_weight > 0.0 && opts.corrected_weight <= 1.0))
                throw RecordError(ErrorCode::BadConfig, lineno, "corrected_weight must be in (0, 1]");
        } else if (name == "expansion_discount") {
            opts.expansion_discount = to_double(value, lineno);
            if (!(opts.expansion_discount > 0.0 && opts.expansion_discount <= 1.0))
                throw RecordError(ErrorCode::BadConfig, lineno, "expansion_discount must be in (0, 1]");
        } else if (name == "expansion_depth") {
            opts.expansion_depth = static_cast<int>(to_count(value, lineno));
        } else {
            throw RecordError(ErrorCode::BadConfig, lineno, "unknown setting '" + key + "'");
        }
    });
    return opts;
}

} // namespace focalmed
