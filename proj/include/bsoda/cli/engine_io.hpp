#ifndef BSODA_CLI_ENGINE_IO_HPP
#define BSODA_CLI_ENGINE_IO_HPP

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "bsoda/diagnosis/diag_trainer.hpp"
#include "bsoda/inquiry/vae_trainer.hpp"
#include "bsoda/session/session.hpp"
#include "bsoda/simulator/simulator.hpp"

namespace bsoda {

/// Files of a models directory.
struct ModelPaths {
  std::filesystem::path dir;

  std::filesystem::path diag_stem() const { return dir / "diag"; }
  std::filesystem::path vae_stem() const { return dir / "vae"; }
  std::filesystem::path cooccurrence() const { return dir / "cooccurrence.json"; }
};

struct TrainOptions {
  DiagConfig diag{};
  DiagTrainConfig diag_train{};
  VaeConfig vae{};
  VaeTrainConfig vae_train{};
  double cooccurrence_threshold = 0.0;
};

/// Diagnosis model plus the co-occurrence index, both from the training split.
DiagModel train_diag_stage(const KnowledgeBase& kb, const Dataset& train, const Dataset& val,
                           const TrainOptions& options, DiagTrainResult* result = nullptr);
Vae train_vae_stage(const KnowledgeBase& kb, const DiagModel& diag, const Dataset& train, const Dataset& val,
                    const TrainOptions& options, VaeTrainResult* result = nullptr);

/// Both stages end to end.
Engine train_engine(const KnowledgeBase& kb, const DatasetSplits& data, const TrainOptions& options);

void save_engine(const Engine& engine, const ModelPaths& paths);
Engine load_engine(const std::filesystem::path& kb_path, const ModelPaths& paths);

/// Fingerprints of the knowledge base and of both checkpoint files.
std::map<std::string, std::string> engine_fingerprints(const std::filesystem::path& kb_path, const ModelPaths& paths);

}  // namespace bsoda

#endif  // BSODA_CLI_ENGINE_IO_HPP
