#include "aes/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aes/text.hpp"

namespace aes {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}
std::string read_str(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValueError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 6);
  write_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    write_str(out, k);
    write_str(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& name : store.names()) {
    const auto& e = store.entry(name);
    write_str(out, name);
    out.put(e.trainable ? 1 : 0);
    write_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!out) throw ValueError("checkpoint write failed: " + path);
}

RawCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("cannot open checkpoint: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kCheckpointMagic, 6) != 0) {
    throw ParseError("not an AESF1 checkpoint: " + path);
  }
  RawCheckpoint ckpt;
  std::uint32_t n_meta = read_u32(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = read_str(in);
    ckpt.meta[k] = read_str(in);
  }
  std::uint32_t n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_str(in);
    int trainable = in.get();
    std::uint32_t rank = read_u32(in);
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::size_t>(read_u64(in)));
      total *= shape.back();
    }
    std::vector<double> data(total);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated in tensor " + name);
    ckpt.order.push_back(name);
    ckpt.tensors.emplace(name, std::make_pair(Tensor(shape, std::move(data)), trainable != 0));
  }
  return ckpt;
}

void restore_values(ParamStore& store, const RawCheckpoint& ckpt) {
  for (const auto& name : store.names()) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      throw ConsistencyError("checkpoint is missing parameter: " + name);
    }
    if (!it->second.first.same_shape(store.value(name))) {
      throw ShapeError("checkpoint tensor " + name + " has shape " +
                       shape_str(it->second.first.shape()) + ", expected " +
                       shape_str(store.value(name).shape()));
    }
    store.value(name) = it->second.first;
  }
}

namespace {

std::string meta_get(const RawCheckpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw ParseError("checkpoint missing meta key: " + key);
  return it->second;
}

std::map<std::string, std::string> common_meta(const SaveContext& ctx, const std::string& kind,
                                               std::size_t classes) {
  std::map<std::string, std::string> meta;
  meta["kind"] = kind;
  meta["item"] = std::to_string(ctx.item);
  meta["min_score"] = std::to_string(ctx.spec.min_score);
  meta["max_score"] = std::to_string(ctx.spec.max_score);
  meta["classes"] = std::to_string(classes);
  meta["window"] = std::to_string(ctx.plan.window);
  meta["prob_average"] = ctx.plan.prob_average ? "1" : "0";
  meta["layer_limit"] = std::to_string(ctx.plan.layer_limit);
  meta["seed"] = std::to_string(ctx.seed);
  meta["remove_stopwords"] = ctx.plan.remove_stopwords ? "1" : "0";
  if (ctx.plan.remove_stopwords) {
    std::vector<std::string> words(builtin_stopwords().begin(), builtin_stopwords().end());
    meta["stoplist"] = join(words, "\n");
  }
  return meta;
}

TrainPlan plan_from_meta(const RawCheckpoint& c) {
  TrainPlan plan;
  plan.window = std::stoul(meta_get(c, "window"));
  plan.prob_average = meta_get(c, "prob_average") == "1";
  plan.layer_limit = std::stoul(meta_get(c, "layer_limit"));
  plan.remove_stopwords = meta_get(c, "remove_stopwords") == "1";
  return plan;
}

ItemSpec spec_from_meta(const RawCheckpoint& c) {
  ItemSpec spec;
  spec.item = std::stoi(meta_get(c, "item"));
  spec.min_score = std::stoi(meta_get(c, "min_score"));
  spec.max_score = std::stoi(meta_get(c, "max_score"));
  return spec;
}

class NeuralPredictor : public EssayPredictor {
 public:
  NeuralPredictor(std::unique_ptr<Scorer> scorer, Vocab vocab, ItemSpec spec, int item,
                  TrainPlan plan, std::set<std::string> stoplist)
      : scorer_(std::move(scorer)), vocab_(std::move(vocab)), spec_(spec), item_(item),
        plan_(plan), stoplist_(std::move(stoplist)) {}

  std::size_t predict_label(const std::string& text) override {
    std::string body = plan_.remove_stopwords ? remove_stopwords(text, stoplist_) : text;
    if (trim(body).empty()) body = text;  // never score an empty string
    return predict_essay(*scorer_, body, vocab_, plan_);
  }
  int predict_score(const std::string& text) override {
    return label_to_score(predict_label(text), spec_);
  }
  std::string kind() const override { return scorer_->kind(); }
  int item() const override { return item_; }
  const ItemSpec& spec() const override { return spec_; }

 private:
  std::unique_ptr<Scorer> scorer_;
  Vocab vocab_;
  ItemSpec spec_;
  int item_;
  TrainPlan plan_;
  std::set<std::string> stoplist_;
};

class BowPredictor : public EssayPredictor {
 public:
  BowPredictor(BowClassifier clf, ItemSpec spec, int item, TrainPlan plan,
               std::set<std::string> stoplist)
      : clf_(std::move(clf)), spec_(spec), item_(item), plan_(plan),
        stoplist_(std::move(stoplist)) {}

  std::size_t predict_label(const std::string& text) override {
    std::string body = plan_.remove_stopwords ? remove_stopwords(text, stoplist_) : text;
    if (trim(body).empty()) body = text;
    return bow_predict(clf_, vectorize(body, clf_.features));
  }
  int predict_score(const std::string& text) override {
    return label_to_score(predict_label(text), spec_);
  }
  std::string kind() const override { return "bow"; }
  int item() const override { return item_; }
  const ItemSpec& spec() const override { return spec_; }

 private:
  BowClassifier clf_;
  ItemSpec spec_;
  int item_;
  TrainPlan plan_;
  std::set<std::string> stoplist_;
};

std::set<std::string> stoplist_from_meta(const RawCheckpoint& c) {
  std::set<std::string> out;
  auto it = c.meta.find("stoplist");
  if (it != c.meta.end()) {
    for (const auto& w : split(it->second, '\n')) {
      if (!w.empty()) out.insert(w);
    }
  }
  return out;
}

}  // namespace

void save_scorer_bundle(const std::string& path, const Scorer& scorer, const Vocab& vocab,
                        const EncoderConfig* enc_cfg, const LstmConfig* lstm_cfg,
                        const SaveContext& ctx) {
  auto meta = common_meta(ctx, scorer.kind(), scorer.classes());
  meta["vocab"] = join(vocab.lines(), "\n");
  if (enc_cfg) {
    meta["enc.embed_dim"] = std::to_string(enc_cfg->embed_dim);
    meta["enc.heads"] = std::to_string(enc_cfg->heads);
    meta["enc.layers"] = std::to_string(enc_cfg->layers);
    meta["enc.ffn_dim"] = std::to_string(enc_cfg->ffn_dim);
    meta["enc.vocab_size"] = std::to_string(enc_cfg->vocab_size);
    meta["enc.max_len"] = std::to_string(enc_cfg->max_len);
    meta["enc.mem_len"] = std::to_string(enc_cfg->mem_len);
    meta["enc.dropout"] = std::to_string(enc_cfg->dropout);
    meta["enc.pos_denominator"] = std::to_string(enc_cfg->pos_denominator);
  }
  if (lstm_cfg) {
    meta["lstm.embed_dim"] = std::to_string(lstm_cfg->embed_dim);
    meta["lstm.hidden"] = std::to_string(lstm_cfg->hidden);
    meta["lstm.layers"] = std::to_string(lstm_cfg->layers);
    meta["lstm.mean_pool"] = lstm_cfg->mean_pool ? "1" : "0";
    meta["lstm.window_cap"] = std::to_string(scorer.max_len());
  }
  save_checkpoint(path, scorer.store(), meta);
}

void save_bow_bundle(const std::string& path, const BowClassifier& clf,
                     const SaveContext& ctx) {
  auto meta = common_meta(ctx, "bow", clf.classes);
  std::ostringstream feat;
  feat.precision(17);
  for (const auto& [word, col] : clf.features.vocabulary) {
    feat << word << '\t' << clf.features.idf[col] << '\n';
  }
  meta["bow.features"] = feat.str();
  meta["bow.cutoff"] = std::to_string(clf.features.high_freq_cutoff);
  meta["bow.smoothed"] = clf.features.smoothed ? "1" : "0";
  save_checkpoint(path, clf.params, meta);
}

std::unique_ptr<EssayPredictor> load_predictor(const std::string& path) {
  RawCheckpoint ckpt = load_checkpoint(path);
  std::string kind = meta_get(ckpt, "kind");
  ItemSpec spec = spec_from_meta(ckpt);
  TrainPlan plan = plan_from_meta(ckpt);
  std::size_t classes = std::stoul(meta_get(ckpt, "classes"));
  int item = std::stoi(meta_get(ckpt, "item"));
  auto stoplist = stoplist_from_meta(ckpt);
  Rng rng = make_rng(0);

  if (kind == "bow") {
    BowClassifier clf;
    clf.classes = classes;
    clf.features.high_freq_cutoff = std::stod(meta_get(ckpt, "bow.cutoff"));
    clf.features.smoothed = meta_get(ckpt, "bow.smoothed") == "1";
    for (const auto& line : split(meta_get(ckpt, "bow.features"), '\n')) {
      if (line.empty()) continue;
      auto parts = split(line, '\t');
      if (parts.size() != 2) throw ParseError("bad bow feature line in checkpoint");
      clf.features.vocabulary[parts[0]] = clf.features.idf.size();
      clf.features.idf.push_back(std::stod(parts[1]));
    }
    clf.params.add("bow.w", Tensor(Shape{classes, clf.features.dim()}));
    clf.params.add("bow.b", Tensor(Shape{classes}));
    restore_values(clf.params, ckpt);
    return std::make_unique<BowPredictor>(std::move(clf), spec, item, plan,
                                          std::move(stoplist));
  }

  // Neural kinds need the embedded vocabulary.
  std::vector<std::string> vocab_lines = split(meta_get(ckpt, "vocab"), '\n');
  if (!vocab_lines.empty() && vocab_lines.back().empty()) vocab_lines.pop_back();
  std::vector<std::string> pieces(vocab_lines.begin() + Vocab::reserved_count,
                                  vocab_lines.end());
  Vocab vocab = Vocab::from_pieces(pieces);

  std::unique_ptr<Scorer> scorer;
  if (kind == "bert" || kind == "xlnet") {
    EncoderConfig cfg;
    cfg.embed_dim = std::stoul(meta_get(ckpt, "enc.embed_dim"));
    cfg.heads = std::stoul(meta_get(ckpt, "enc.heads"));
    cfg.layers = std::stoul(meta_get(ckpt, "enc.layers"));
    cfg.ffn_dim = std::stoul(meta_get(ckpt, "enc.ffn_dim"));
    cfg.vocab_size = std::stoul(meta_get(ckpt, "enc.vocab_size"));
    cfg.max_len = std::stoul(meta_get(ckpt, "enc.max_len"));
    cfg.mem_len = std::stoul(meta_get(ckpt, "enc.mem_len"));
    cfg.dropout = std::stod(meta_get(ckpt, "enc.dropout"));
    cfg.pos_denominator = std::stod(meta_get(ckpt, "enc.pos_denominator"));
    scorer = std::make_unique<TransformerScorer>(cfg, variant_from_string(kind), classes, rng);
  } else if (kind == "lstm") {
    LstmConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_dim = std::stoul(meta_get(ckpt, "lstm.embed_dim"));
    cfg.hidden = std::stoul(meta_get(ckpt, "lstm.hidden"));
    cfg.layers = std::stoul(meta_get(ckpt, "lstm.layers"));
    cfg.classes = classes;
    cfg.mean_pool = meta_get(ckpt, "lstm.mean_pool") == "1";
    scorer = std::make_unique<LstmScorer>(cfg, std::stoul(meta_get(ckpt, "lstm.window_cap")), rng);
  } else {
    throw ParseError("unknown model kind in checkpoint: " + kind);
  }
  restore_values(scorer->store(), ckpt);
  return std::make_unique<NeuralPredictor>(std::move(scorer), std::move(vocab), spec, item,
                                           plan, std::move(stoplist));
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValueError("cannot hash file: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace aes
