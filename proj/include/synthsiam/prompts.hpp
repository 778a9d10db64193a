#pragma once

// Prompt taxonomy: Template variants x Content levels, the template registry,
// and deterministic prompt rendering.

#include <array>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "synthsiam/corpus.hpp"
#include "synthsiam/detail/sha256.hpp"
#include "synthsiam/errors.hpp"

namespace synthsiam {

enum class TemplateVariant {
    DirectlyUseRequirement,
    AnotherExpression,
    DoubleGpt,
    ManyToOne,
};

inline constexpr std::array<TemplateVariant, 4> kAllVariants = {
    TemplateVariant::DirectlyUseRequirement,
    TemplateVariant::AnotherExpression,
    TemplateVariant::DoubleGpt,
    TemplateVariant::ManyToOne,
};

inline std::string variant_name(TemplateVariant v) {
    switch (v) {
        case TemplateVariant::DirectlyUseRequirement: return "directly_use_requirement";
        case TemplateVariant::AnotherExpression: return "another_expression";
        case TemplateVariant::DoubleGpt: return "double_gpt";
        case TemplateVariant::ManyToOne: return "many_to_one";
    }
    throw InvalidArgument("unknown template variant");
}

inline TemplateVariant variant_from_name(std::string_view name) {
    for (TemplateVariant v : kAllVariants) {
        if (variant_name(v) == name) return v;
    }
    throw InvalidArgument("unknown template variant '" + std::string(name) + "'");
}

// Human-content complexity, ordered L0 < L1 < L2 < L3.
enum class ContentLevel { L0 = 0, L1 = 1, L2 = 2, L3 = 3 };

inline constexpr std::array<ContentLevel, 4> kAllLevels = {
    ContentLevel::L0, ContentLevel::L1, ContentLevel::L2, ContentLevel::L3};

inline int level_number(ContentLevel level) { return static_cast<int>(level); }

inline ContentLevel level_from_number(int n) {
    if (n < 0 || n > 3) {
        throw InvalidArgument("content level must be in 0..3");
    }
    return static_cast<ContentLevel>(n);
}

inline std::string level_name(ContentLevel level) {
    return "L" + std::to_string(level_number(level));
}

inline constexpr std::size_t kManyToOneAuxCount = 5;

// The human information X carried by a prompt, plus its provenance.
struct ContentPayload {
    ContentLevel level = ContentLevel::L0;
    std::string x_text;
    std::string source_doc_id;
    std::vector<std::string> auxiliary_texts; // exactly 5 for many_to_one, else empty
    std::string derivation = "original";      // original | extractive_summary |
                                              // generated_summary | double_gpt_rewrite
};

struct PromptSpec {
    TemplateVariant variant = TemplateVariant::DirectlyUseRequirement;
    ContentPayload content;
    std::string rendered;
    std::string registry_hash;

    std::pair<TemplateVariant, ContentLevel> grid_cell() const {
        return {variant, content.level};
    }

    PromptMeta meta() const {
        PromptMeta m;
        m.variant = variant_name(variant);
        m.level = level_number(content.level);
        m.source_doc_id = content.source_doc_id;
        m.derivation = content.derivation;
        m.registry_hash = registry_hash;
        return m;
    }
};

// Versioned registry of one canonical template string per variant plus the
// rewrite/summarize instructions. File format: `key = value` lines, `#`
// comments, `\n` escapes in values.
class TemplateRegistry {
public:
    static constexpr const char* kRewriteKey = "double_gpt_rewrite";
    static constexpr const char* kSummarizeKey = "summarize";

    static TemplateRegistry load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw IoError("cannot open template registry '" + path.string() + "'");
        }
        std::stringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    static TemplateRegistry parse(const std::string& file_contents) {
        TemplateRegistry reg;
        reg.hash_ = detail::sha256_hex(file_contents);
        std::istringstream in(file_contents);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == '#') continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw InvalidArgument("template registry line without '=': " + line);
            }
            std::string key = trim(line.substr(0, eq));
            std::string value = unescape(trim(line.substr(eq + 1)));
            if (key.empty() || value.empty()) {
                throw InvalidArgument("template registry entry with empty key or value");
            }
            reg.entries_[std::move(key)] = std::move(value);
        }
        for (TemplateVariant v : kAllVariants) {
            if (!reg.entries_.contains(variant_name(v))) {
                throw InvalidArgument("template registry missing variant '" +
                                      variant_name(v) + "'");
            }
        }
        if (!reg.entries_.contains(kRewriteKey) || !reg.entries_.contains(kSummarizeKey)) {
            throw InvalidArgument("template registry missing rewrite/summarize entries");
        }
        return reg;
    }

    // The canonical strings committed with the repository.
    static const TemplateRegistry& builtin() {
        static const TemplateRegistry reg = parse(builtin_text());
        return reg;
    }

    static std::string builtin_text() {
        return "# Prompt template registry, version 1.\n"
               "# Placeholders: {X} = content payload; {AUX1}..{AUX5} = auxiliary"
               " articles (many_to_one only).\n"
               "directly_use_requirement = Write an abstract for a paper about {X}\n"
               "another_expression = I need a professional paper abstract covering"
               " the following topic: {X}\n"
               "double_gpt = Write an abstract for a paper about {X}\n"
               "many_to_one = Combine the following five articles about {X} into a"
               " new article.\\n1. {AUX1}\\n2. {AUX2}\\n3. {AUX3}\\n4. {AUX4}\\n5. {AUX5}\n"
               "double_gpt_rewrite = Rewrite the following text in your own words: {X}\n"
               "summarize = Summarize the following abstract in two sentences: {X}\n";
    }

    const std::string& variant_template(TemplateVariant v) const {
        return entries_.at(variant_name(v));
    }
    const std::string& rewrite_template() const { return entries_.at(kRewriteKey); }
    const std::string& summarize_template() const { return entries_.at(kSummarizeKey); }
    const std::string& version_hash() const { return hash_; }

private:
    static std::string trim(std::string s) {
        const std::size_t b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return "";
        const std::size_t e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }

    static std::string unescape(const std::string& s) {
        std::string out;
        out.reserve(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
                out.push_back('\n');
                ++i;
            } else {
                out.push_back(s[i]);
            }
        }
        return out;
    }

    std::map<std::string, std::string> entries_;
    std::string hash_;
};

// The fixed "simple prompt" used to show the baseline weakness of
// single-input detectors.
inline std::string render_simple_prompt() {
    return "Write an abstract for a professional paper.";
}

using Summarizer = std::function<std::string(const std::string&)>;

// Projects the human information X out of a document at the requested level.
// L2 uses `summarizer` when given, otherwise the extractive fallback
// (first two sentences).
inline ContentPayload derive_content(const Document& doc, ContentLevel level,
                                     const Summarizer& summarizer = {}) {
    if (doc.source.is_generated()) {
        throw InvalidArgument("content must be derived from a human-sourced document");
    }
    ContentPayload payload;
    payload.level = level;
    payload.source_doc_id = doc.id;
    switch (level) {
        case ContentLevel::L0:
            if (doc.field_name.empty()) {
                throw InvalidArgument("document '" + doc.id + "' has no field_name for L0");
            }
            payload.x_text = doc.field_name;
            break;
        case ContentLevel::L1:
            if (doc.title.empty()) {
                throw InvalidArgument("document '" + doc.id + "' has no title for L1");
            }
            payload.x_text = doc.title;
            break;
        case ContentLevel::L2:
            if (summarizer) {
                payload.x_text = normalize_text(summarizer(doc.text));
                payload.derivation = "generated_summary";
                if (payload.x_text.empty()) {
                    throw InvalidArgument("summarizer returned empty text for '" + doc.id + "'");
                }
            } else {
                payload.x_text = first_sentences(doc.text, 2);
                payload.derivation = "extractive_summary";
            }
            break;
        case ContentLevel::L3:
            payload.x_text = doc.text;
            break;
    }
    return payload;
}

namespace detail {

inline std::string replace_all(std::string text, std::string_view placeholder,
                               std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
        text.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace detail

// Interpolates X (and the auxiliary articles for many_to_one) into the
// variant's registered template. Pure: same inputs, same rendered string.
inline PromptSpec render_prompt(const TemplateRegistry& registry, TemplateVariant variant,
                                const ContentPayload& content) {
    if (content.x_text.empty()) {
        throw InvalidArgument("content payload has empty x_text");
    }
    if (variant == TemplateVariant::ManyToOne) {
        if (content.auxiliary_texts.size() != kManyToOneAuxCount) {
            throw InvalidArgument("many_to_one requires exactly 5 auxiliary texts, got " +
                                  std::to_string(content.auxiliary_texts.size()));
        }
    } else if (!content.auxiliary_texts.empty()) {
        throw InvalidArgument("auxiliary texts are only used by many_to_one prompts");
    }

    std::string rendered =
        detail::replace_all(registry.variant_template(variant), "{X}", content.x_text);
    for (std::size_t i = 0; i < content.auxiliary_texts.size(); ++i) {
        rendered = detail::replace_all(rendered, "{AUX" + std::to_string(i + 1) + "}",
                                       content.auxiliary_texts[i]);
    }
    if (rendered.find('{') != std::string::npos &&
        (rendered.find("{X}") != std::string::npos ||
         rendered.find("{AUX") != std::string::npos)) {
        throw InvalidArgument("template for '" + variant_name(variant) +
                              "' has unfilled placeholders");
    }

    PromptSpec spec;
    spec.variant = variant;
    spec.content = content;
    spec.rendered = std::move(rendered);
    spec.registry_hash = registry.version_hash();
    return spec;
}

} // namespace synthsiam
