#pragma once

// Checkpoint-directory loader dispatching on the embedded backend name.

#include <filesystem>
#include <memory>

#include "synthsiam/encoder.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/transformer.hpp"

namespace synthsiam {

inline std::unique_ptr<TrainableTextEncoder> load_encoder(const std::filesystem::path& dir) {
    const auto config_path = dir / "config.json";
    if (!std::filesystem::exists(config_path)) {
        throw IoError("no encoder checkpoint at '" + dir.string() + "'");
    }
    const json config = detail::read_json_file(config_path);
    const std::string backend = config.value("backend", "");
    if (backend == "toy") return ToyEncoder::load(dir);
    if (backend == "transformer") return TransformerEncoder::load(dir);
    throw IoError("unknown encoder backend '" + backend + "' in '" + dir.string() + "'");
}

} // namespace synthsiam
