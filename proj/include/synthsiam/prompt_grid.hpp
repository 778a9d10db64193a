#pragma once

// Prompt-taxonomy operations that need a generation backend: the double-GPT
// content rewrite and the 4x4 (variant x level) prompt grid builder.

#include <cstdint>
#include <string>
#include <vector>

#include "synthsiam/corpus.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/generation.hpp"
#include "synthsiam/prompts.hpp"

namespace synthsiam {

// Passes the content payload X through the generation model once, yielding the
// rewritten X used by double_gpt prompts. Provenance (source_doc_id) survives;
// the rewrite goes through the normal cache/retry path.
inline ContentPayload double_gpt_rewrite(GenerationClient& generator,
                                         const TemplateRegistry& registry,
                                         const ContentPayload& content,
                                         const GenerationParams& params,
                                         const GenerateOptions& options = {}) {
    if (content.x_text.empty()) {
        throw InvalidArgument("cannot rewrite an empty content payload");
    }
    ContentPayload instruction = content;
    instruction.auxiliary_texts.clear();
    PromptSpec rewrite_spec;
    rewrite_spec.variant = TemplateVariant::DoubleGpt;
    rewrite_spec.content = instruction;
    rewrite_spec.content.derivation = "double_gpt_rewrite";
    rewrite_spec.rendered =
        detail::replace_all(registry.rewrite_template(), "{X}", content.x_text);
    rewrite_spec.registry_hash = registry.version_hash();

    const Document rewritten = generate_document(generator, rewrite_spec, params, options);

    ContentPayload out = content;
    out.x_text = rewritten.text;
    out.derivation = "double_gpt_rewrite";
    return out;
}

enum class SummaryMode { Extractive, Generative };

struct GridOptions {
    GenerationParams params;                      // used for rewrites / generative summaries
    GenerateOptions generate;                     // cache + retry policy
    SummaryMode summary_mode = SummaryMode::Extractive;
    const TemplateRegistry* registry = nullptr;   // defaults to the builtin registry
};

namespace detail {

inline const TemplateRegistry& registry_or_builtin(const TemplateRegistry* reg) {
    return reg != nullptr ? *reg : TemplateRegistry::builtin();
}

// Documents usable as content sources for a given cell.
inline std::vector<std::size_t> eligible_sources(const Corpus& corpus, ContentLevel level,
                                                 TemplateVariant variant) {
    // many_to_one needs 5 same-field auxiliary articles besides the source.
    std::unordered_map<std::string, std::size_t> field_counts;
    if (variant == TemplateVariant::ManyToOne) {
        for (const auto& d : corpus.documents()) {
            if (d.source.is_human() && !d.field_name.empty()) ++field_counts[d.field_name];
        }
    }
    std::vector<std::size_t> out;
    const auto& docs = corpus.documents();
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const Document& d = docs[i];
        if (!d.source.is_human()) continue;
        if (level == ContentLevel::L0 && d.field_name.empty()) continue;
        if (level == ContentLevel::L1 && d.title.empty()) continue;
        if (variant == TemplateVariant::ManyToOne) {
            if (d.field_name.empty()) continue;
            if (field_counts[d.field_name] < kManyToOneAuxCount + 1) continue;
        }
        out.push_back(i);
    }
    return out;
}

inline std::vector<std::string> sample_auxiliary_texts(const Corpus& corpus,
                                                       const Document& source,
                                                       SplitMix64& rng) {
    std::vector<const Document*> pool;
    for (const auto& d : corpus.documents()) {
        if (d.source.is_human() && d.id != source.id && d.field_name == source.field_name) {
            pool.push_back(&d);
        }
    }
    if (pool.size() < kManyToOneAuxCount) {
        throw InvalidArgument("not enough documents in field '" + source.field_name +
                              "' for many_to_one auxiliaries");
    }
    const auto idx = rng.sample_indices(pool.size(), kManyToOneAuxCount);
    std::vector<std::string> texts;
    texts.reserve(kManyToOneAuxCount);
    for (std::size_t i : idx) texts.push_back(pool[i]->text);
    return texts;
}

inline Summarizer generative_summarizer(GenerationClient& generator,
                                        const TemplateRegistry& registry,
                                        const GenerationParams& params,
                                        const GenerateOptions& options) {
    return [&generator, &registry, params, options](const std::string& text) {
        PromptSpec spec;
        spec.variant = TemplateVariant::DirectlyUseRequirement;
        spec.content.level = ContentLevel::L2;
        spec.content.x_text = text;
        spec.content.derivation = "generated_summary";
        spec.rendered = replace_all(registry.summarize_template(), "{X}", text);
        spec.registry_hash = registry.version_hash();
        return generate_document(generator, spec, params, options).text;
    };
}

// Builds one cell's prompt specs; `cell_seed` drives all sampling for the cell.
inline std::vector<PromptSpec> build_grid_cell(const Corpus& human_docs,
                                               TemplateVariant variant, ContentLevel level,
                                               std::size_t per_cell, std::uint64_t cell_seed,
                                               GenerationClient& generator,
                                               const GridOptions& options) {
    const TemplateRegistry& registry = registry_or_builtin(options.registry);
    const auto eligible = eligible_sources(human_docs, level, variant);
    if (eligible.size() < per_cell) {
        throw InvalidArgument("cell " + variant_name(variant) + "/" + level_name(level) +
                              " needs " + std::to_string(per_cell) +
                              " eligible source documents, corpus has " +
                              std::to_string(eligible.size()));
    }
    SplitMix64 rng(cell_seed);
    std::vector<std::size_t> order(eligible);
    rng.shuffle(order);
    order.resize(per_cell);

    Summarizer summarizer;
    if (options.summary_mode == SummaryMode::Generative) {
        summarizer = generative_summarizer(generator, registry, options.params,
                                           options.generate);
    }

    std::vector<PromptSpec> specs;
    specs.reserve(per_cell);
    for (std::size_t doc_index : order) {
        const Document& doc = human_docs.documents()[doc_index];
        ContentPayload payload = derive_content(doc, level, summarizer);
        if (variant == TemplateVariant::ManyToOne) {
            payload.auxiliary_texts = sample_auxiliary_texts(human_docs, doc, rng);
        }
        if (variant == TemplateVariant::DoubleGpt) {
            payload = double_gpt_rewrite(generator, registry, payload, options.params,
                                         options.generate);
        }
        specs.push_back(render_prompt(registry, variant, payload));
    }
    return specs;
}

} // namespace detail

// The 16-cell prompt grid: every template variant at every content level,
// per_cell prompts each, sampled deterministically from `seed`. Cell order is
// canonical: variants in enum order, levels 0..3 within each variant.
inline std::vector<PromptSpec> build_prompt_grid(const Corpus& human_docs,
                                                 std::size_t per_cell, std::uint64_t seed,
                                                 GenerationClient& generator,
                                                 const GridOptions& options = {}) {
    if (per_cell == 0) {
        throw InvalidArgument("per_cell must be >= 1");
    }
    std::vector<PromptSpec> grid;
    grid.reserve(kAllVariants.size() * kAllLevels.size() * per_cell);
    std::size_t cell_index = 0;
    for (TemplateVariant variant : kAllVariants) {
        for (ContentLevel level : kAllLevels) {
            const std::uint64_t cell_seed = detail::mix_seeds(seed, cell_index++);
            auto cell = detail::build_grid_cell(human_docs, variant, level, per_cell,
                                                cell_seed, generator, options);
            grid.insert(grid.end(), std::make_move_iterator(cell.begin()),
                        std::make_move_iterator(cell.end()));
        }
    }
    return grid;
}

} // namespace synthsiam
