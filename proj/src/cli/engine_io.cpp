#include "bsoda/cli/engine_io.hpp"

#include "bsoda/core/json_io.hpp"
#include "bsoda/diagnosis/priors.hpp"

namespace bsoda {

DiagModel train_diag_stage(const KnowledgeBase& kb, const Dataset& train, const Dataset& val,
                           const TrainOptions& options, DiagTrainResult* result) {
  DiagModel diag(kb.num_symptoms(), kb.num_diseases(), options.diag);
  const PriorMatrices priors = build_priors(kb, train);
  DiagTrainResult r = train_diag(diag, priors, train, val, options.diag_train);
  // Checkpoints hold float32, so a freshly trained engine matches a reloaded one.
  diag.params().round_to_float();
  if (result) *result = std::move(r);
  return diag;
}

Vae train_vae_stage(const KnowledgeBase& kb, const DiagModel& diag, const Dataset& train, const Dataset& val,
                    const TrainOptions& options, VaeTrainResult* result) {
  Vae vae(kb.num_symptoms(), kb.num_diseases(), diag.export_embeddings(), options.vae);
  VaeTrainResult r = train_vae(vae, train, val, options.vae_train);
  vae.params().round_to_float();
  vae.refresh_experts();
  if (result) *result = std::move(r);
  return vae;
}

Engine train_engine(const KnowledgeBase& kb, const DatasetSplits& data, const TrainOptions& options) {
  DiagModel diag = train_diag_stage(kb, data.train, data.val, options);
  Vae vae = train_vae_stage(kb, diag, data.train, data.val, options);
  CooccurrenceIndex index = build_cooccurrence(data.train, kb.num_symptoms(), options.cooccurrence_threshold);
  return Engine{kb, std::move(index), std::move(diag), std::move(vae)};
}

void save_engine(const Engine& engine, const ModelPaths& paths) {
  const std::string fp = engine.kb.fingerprint();
  save_diag_model(engine.diag, paths.diag_stem(), fp);
  save_vae(engine.vae, paths.vae_stem(), fp);
  write_text_file(paths.cooccurrence(), serialize_cooccurrence(engine.cooccurrence, engine.kb));
}

Engine load_engine(const std::filesystem::path& kb_path, const ModelPaths& paths) {
  KnowledgeBase kb = load_knowledge_base(kb_path);
  const std::string fp = kb.fingerprint();
  DiagModel diag = load_diag_model(paths.diag_stem(), fp);
  Vae vae = load_vae(paths.vae_stem(), fp);
  if (embedding_fingerprint(vae.embeddings()) != embedding_fingerprint(diag.export_embeddings())) {
    throw ValidationError("VAE embeddings do not match the diagnosis checkpoint");
  }
  CooccurrenceIndex index = parse_cooccurrence(read_text_file(paths.cooccurrence()), kb);
  return Engine{std::move(kb), std::move(index), std::move(diag), std::move(vae)};
}

std::map<std::string, std::string> engine_fingerprints(const std::filesystem::path& kb_path,
                                                       const ModelPaths& paths) {
  auto bin = [](std::filesystem::path stem) {
    stem += ".bin";
    return fnv1a_hex(read_text_file(stem));
  };
  return {{"knowledge_base", load_knowledge_base(kb_path).fingerprint()},
          {"diag", bin(paths.diag_stem())},
          {"vae", bin(paths.vae_stem())},
          {"cooccurrence", fnv1a_hex(read_text_file(paths.cooccurrence()))}};
}

}  // namespace bsoda
