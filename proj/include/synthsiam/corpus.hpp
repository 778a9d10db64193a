#pragma once

// Document/Corpus model: ingestion of human-written abstract collections,
// normalization, exact-match dedup, and seeded train/val/test splitting.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/detail/rng.hpp"
#include "synthsiam/detail/sha256.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/text.hpp"

namespace synthsiam {

using json = nlohmann::json;

// Provenance of a generated document: which template variant / content level /
// source document produced its prompt, and how the content payload was derived.
struct PromptMeta {
    std::string variant;
    int level = 0;
    std::string source_doc_id;
    std::string derivation = "original";
    std::string registry_hash;

    json to_json() const {
        return json{{"variant", variant},
                    {"level", level},
                    {"source_doc_id", source_doc_id},
                    {"derivation", derivation},
                    {"registry_hash", registry_hash}};
    }

    static PromptMeta from_json(const json& j) {
        PromptMeta m;
        m.variant = j.value("variant", "");
        m.level = j.value("level", 0);
        m.source_doc_id = j.value("source_doc_id", "");
        m.derivation = j.value("derivation", "original");
        m.registry_hash = j.value("registry_hash", "");
        return m;
    }
};

class DocumentSource {
public:
    static DocumentSource human() { return DocumentSource(false, ""); }
    static DocumentSource generated(std::string model_id) {
        if (model_id.empty()) {
            throw InvalidArgument("generated source requires a model_id");
        }
        return DocumentSource(true, std::move(model_id));
    }

    bool is_generated() const { return generated_; }
    bool is_human() const { return !generated_; }
    const std::string& model_id() const { return model_id_; }

    bool operator==(const DocumentSource&) const = default;

private:
    DocumentSource(bool generated, std::string model_id)
        : generated_(generated), model_id_(std::move(model_id)) {}

    bool generated_ = false;
    std::string model_id_;
};

struct Document {
    std::string id;
    std::string text; // normalized, non-empty
    DocumentSource source = DocumentSource::human();
    std::optional<PromptMeta> prompt_meta;
    std::string field_name; // empty = absent
    std::string title;      // empty = absent

    static Document human(std::string id, std::string_view raw_text,
                          std::string field_name = "", std::string title = "") {
        Document d;
        d.id = std::move(id);
        d.text = checked_normalize(d.id, raw_text);
        d.source = DocumentSource::human();
        d.field_name = std::move(field_name);
        d.title = std::move(title);
        return d;
    }

    static Document generated(std::string id, std::string_view raw_text,
                              std::string model_id, PromptMeta meta) {
        Document d;
        d.id = std::move(id);
        d.text = checked_normalize(d.id, raw_text);
        d.source = DocumentSource::generated(std::move(model_id));
        d.prompt_meta = std::move(meta);
        return d;
    }

    std::string fingerprint() const { return detail::sha256_hex(text); }

private:
    static std::string checked_normalize(const std::string& id, std::string_view raw) {
        std::string t = normalize_text(raw);
        if (t.empty()) {
            throw InvalidArgument("document '" + id + "' has empty text after normalization");
        }
        return t;
    }
};

enum class SplitTag { Train, Val, Test };

inline std::string split_tag_name(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::Val: return "val";
        case SplitTag::Test: return "test";
    }
    throw InvalidArgument("unknown split tag");
}

inline SplitTag split_tag_from_name(std::string_view name) {
    if (name == "train") return SplitTag::Train;
    if (name == "val") return SplitTag::Val;
    if (name == "test") return SplitTag::Test;
    throw InvalidArgument("unknown split tag '" + std::string(name) + "'");
}

// Ordered, id-indexed document collection. Immutable by convention once built:
// the pipeline constructs a corpus and only reads it afterwards.
class Corpus {
public:
    Corpus() = default;

    void add(Document doc) {
        if (index_.contains(doc.id)) {
            throw InvalidArgument("duplicate document id '" + doc.id + "'");
        }
        index_.emplace(doc.id, docs_.size());
        docs_.push_back(std::move(doc));
    }

    const std::vector<Document>& documents() const { return docs_; }
    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    const Document* find(const std::string& id) const {
        const auto it = index_.find(id);
        return it == index_.end() ? nullptr : &docs_[it->second];
    }

    bool has_split_tags() const { return !split_tags_.empty(); }

    void set_split_tag(const std::string& id, SplitTag tag) {
        if (!index_.contains(id)) {
            throw InvalidArgument("split tag for unknown document id '" + id + "'");
        }
        split_tags_[id] = tag;
    }

    std::optional<SplitTag> split_tag(const std::string& id) const {
        const auto it = split_tags_.find(id);
        if (it == split_tags_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<const Document*> split(SplitTag tag) const {
        std::vector<const Document*> out;
        for (const auto& d : docs_) {
            const auto it = split_tags_.find(d.id);
            if (it != split_tags_.end() && it->second == tag) out.push_back(&d);
        }
        return out;
    }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> index_;
    std::unordered_map<std::string, SplitTag> split_tags_;
};

// Exact-match dedup on the normalized-text fingerprint; first occurrence wins.
inline Corpus deduplicate(const Corpus& corpus, std::size_t* dropped = nullptr) {
    Corpus out;
    std::unordered_set<std::string> seen;
    std::size_t drop_count = 0;
    for (const auto& d : corpus.documents()) {
        if (seen.insert(d.fingerprint()).second) {
            out.add(d);
        } else {
            ++drop_count;
        }
    }
    if (dropped != nullptr) *dropped = drop_count;
    return out;
}

struct IngestStats {
    std::size_t total_lines = 0;
    std::size_t malformed = 0;
    std::size_t filtered_out = 0;
    std::size_t deduplicated = 0;
    std::size_t ingested = 0;
};

// Predicate over the record's raw `categories` string.
using FieldFilter = std::function<bool(const std::string&)>;

inline FieldFilter category_filter(std::string category) {
    return [category = std::move(category)](const std::string& categories) {
        std::size_t pos = 0;
        while (pos <= categories.size()) {
            const std::size_t end = categories.find(' ', pos);
            const std::string tok = categories.substr(
                pos, end == std::string::npos ? std::string::npos : end - pos);
            if (tok == category) return true;
            if (end == std::string::npos) break;
            pos = end + 1;
        }
        return false;
    };
}

// Reads an arXiv-style JSONL file ({"id","title","abstract","categories"}) into
// a corpus of Human documents. Malformed lines are skipped and counted;
// duplicate ids are a hard error; duplicate normalized text is dropped.
inline Corpus ingest_human_corpus(const std::filesystem::path& path,
                                  const FieldFilter& filter = {},
                                  IngestStats* stats_out = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file '" + path.string() + "'");
    }
    IngestStats stats;
    Corpus corpus;
    std::unordered_set<std::string> fingerprints;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++stats.total_lines;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception&) {
            ++stats.malformed;
            continue;
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("abstract") ||
            !rec["id"].is_string() || !rec["abstract"].is_string()) {
            ++stats.malformed;
            continue;
        }
        const std::string id = rec["id"].get<std::string>();
        const std::string categories = rec.value("categories", "");
        if (filter && !filter(categories)) {
            ++stats.filtered_out;
            continue;
        }
        std::string field_name = categories.substr(0, categories.find(' '));
        std::string title = normalize_text(rec.value("title", ""));
        Document doc;
        try {
            doc = Document::human(id, rec["abstract"].get<std::string>(),
                                  std::move(field_name), std::move(title));
        } catch (const InvalidArgument&) {
            ++stats.malformed; // empty abstract after normalization
            continue;
        }
        if (corpus.find(id) != nullptr) {
            throw InvalidArgument("duplicate document id '" + id + "' in " + path.string());
        }
        if (!fingerprints.insert(doc.fingerprint()).second) {
            ++stats.deduplicated;
            continue;
        }
        corpus.add(std::move(doc));
        ++stats.ingested;
    }
    if (corpus.empty()) {
        throw InvalidArgument("no valid records in corpus file '" + path.string() + "'");
    }
    if (stats_out != nullptr) *stats_out = stats;
    return corpus;
}

// Seeded train/val/test split. Val/test sizes are the rounded ratio shares,
// remainder goes to train. Pure function of (document id order, ratios, seed).
inline Corpus split_corpus(Corpus corpus, const std::array<double, 3>& ratios,
                           std::uint64_t seed) {
    if (corpus.empty()) {
        throw InvalidArgument("cannot split an empty corpus");
    }
    for (double r : ratios) {
        if (r < 0.0) throw InvalidArgument("split ratios must be nonnegative");
    }
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9) {
        throw InvalidArgument("split ratios must sum to 1");
    }
    const std::size_t n = corpus.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
    std::size_t n_test = static_cast<std::size_t>(std::llround(ratios[2] * static_cast<double>(n)));
    if (n_val > n) n_val = n;
    if (n_val + n_test > n) n_test = n - n_val;
    const std::size_t n_train = n - n_val - n_test;

    detail::SplitMix64 rng(seed);
    std::vector<std::size_t> order = rng.sample_indices(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const SplitTag tag = (k < n_train) ? SplitTag::Train
                             : (k < n_train + n_val) ? SplitTag::Val
                                                     : SplitTag::Test;
        corpus.set_split_tag(corpus.documents()[order[k]].id, tag);
    }
    return corpus;
}

inline json document_to_json(const Document& d, const Corpus* corpus = nullptr) {
    json j{{"id", d.id},
           {"title", d.title},
           {"abstract", d.text},
           {"categories", d.field_name},
           {"source", json{{"kind", d.source.is_generated() ? "generated" : "human"},
                           {"model_id", d.source.model_id()}}}};
    if (d.prompt_meta.has_value()) {
        j["prompt_meta"] = d.prompt_meta->to_json();
    }
    if (corpus != nullptr) {
        if (const auto tag = corpus->split_tag(d.id); tag.has_value()) {
            j["split"] = split_tag_name(*tag);
        }
    }
    return j;
}

inline Document document_from_json(const json& j) {
    const std::string id = j.at("id").get<std::string>();
    const std::string text = j.at("abstract").get<std::string>();
    const std::string kind = j.contains("source") ? j["source"].value("kind", "human") : "human";
    if (kind == "generated") {
        PromptMeta meta = j.contains("prompt_meta") ? PromptMeta::from_json(j["prompt_meta"])
                                                    : PromptMeta{};
        return Document::generated(id, text, j["source"].value("model_id", "unknown"),
                                   std::move(meta));
    }
    return Document::human(id, text, j.value("categories", ""), j.value("title", ""));
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write corpus file '" + path.string() + "'");
    }
    for (const auto& d : corpus.documents()) {
        out << document_to_json(d, &corpus).dump() << '\n';
    }
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file '" + path.string() + "'");
    }
    Corpus corpus;
    std::vector<std::pair<std::string, SplitTag>> tags;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line);
        Document doc = document_from_json(j);
        const std::string id = doc.id;
        corpus.add(std::move(doc));
        if (j.contains("split")) {
            tags.emplace_back(id, split_tag_from_name(j["split"].get<std::string>()));
        }
    }
    for (const auto& [id, tag] : tags) corpus.set_split_tag(id, tag);
    return corpus;
}

} // namespace synthsiam
