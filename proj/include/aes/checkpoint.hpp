#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "aes/bow.hpp"
#include "aes/corpus.hpp"
#include "aes/param_store.hpp"
#include "aes/training.hpp"

namespace aes {

// Self-describing model container: versioned magic header "AESF1", a block of
// string metadata (config, embedded vocab, label range), then the named
// parameter tensors as row-major 64-bit floats.
inline constexpr char kCheckpointMagic[] = "AESF1\n";

struct RawCheckpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::string> order;
  std::map<std::string, std::pair<Tensor, bool>> tensors;  // name -> (value, trainable)
};

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta);
RawCheckpoint load_checkpoint(const std::string& path);
void restore_values(ParamStore& store, const RawCheckpoint& ckpt);

// Loaded, evaluation-only essay scorer of any kind (bow | lstm | bert | xlnet).
class EssayPredictor {
 public:
  virtual ~EssayPredictor() = default;
  virtual int predict_score(const std::string& text) = 0;
  virtual std::size_t predict_label(const std::string& text) = 0;
  virtual std::string kind() const = 0;
  virtual int item() const = 0;
  virtual const ItemSpec& spec() const = 0;
};

struct SaveContext {
  int item = 0;
  ItemSpec spec;
  TrainPlan plan;     // window / prob_average / layer_limit / stopword choices
  std::uint64_t seed = 0;
};

void save_scorer_bundle(const std::string& path, const Scorer& scorer, const Vocab& vocab,
                        const EncoderConfig* enc_cfg, const LstmConfig* lstm_cfg,
                        const SaveContext& ctx);
void save_bow_bundle(const std::string& path, const BowClassifier& clf,
                     const SaveContext& ctx);

std::unique_ptr<EssayPredictor> load_predictor(const std::string& path);

// FNV-1a over the file bytes, for run manifests.
std::string file_hash_hex(const std::string& path);

}  // namespace aes
