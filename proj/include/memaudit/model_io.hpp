#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "memaudit/neural.hpp"
#include "memaudit/ngram.hpp"

namespace memaudit {

enum class ModelKind : std::uint8_t { NGram = 1, Neural = 2 };

/// Deserialized model plus its kind. Exactly one of the pointers is set.
struct LoadedModel {
    ModelKind kind = ModelKind::NGram;
    std::shared_ptr<NGramModel> ngram;
    std::shared_ptr<NeuralModel> neural;

    ModelPtr model() const {
        if (kind == ModelKind::NGram) return ngram;
        return neural;
    }
};

/// Binary model files: fixed magic, format version, vocabulary, then a
/// kind-specific payload. N-gram count tables are written in sorted
/// context order so identical models produce identical bytes.
void save_model(const std::string& path, const NGramModel& model);
void save_model(const std::string& path, const NeuralModel& model);

/// Throws IoError on unreadable files or malformed content.
LoadedModel load_model(const std::string& path);

} // namespace memaudit
