#pragma once

// Training stages: per-query pair generation, supervised pre-training,
// integrated training through the frozen backends, optional last-layer
// fine-tuning, and single-pass stylization.

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fcs/distribution.hpp"
#include "fcs/file_util.hpp"
#include "fcs/objective.hpp"
#include "fcs/optim.hpp"
#include "fcs/parallel.hpp"
#include "fcs/textstyle_net.hpp"

namespace fcs {

struct StageConfig {
  int steps = 200;       // stages 1 and 4
  int epochs = 0;        // stages 2 and 3
  double lr = 5e-4;
  int batch_size = 8;
  LossWeights weights;
  PatchConfig patch;
  std::uint64_t seed = 0;
  std::string source_text = kDefaultSourceText;
  bool optimize_embedding = false;  // stage 1: optimize the style vector directly
  unsigned threads = 0;             // stage 1 prompt parallelism, 0 = all cores

  void validate() const {
    if (steps < 0 || epochs < 0) fail(Errc::invalid_config, "steps and epochs must be non-negative");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail(Errc::invalid_config, "learning rate must be positive");
    if (batch_size < 1) fail(Errc::invalid_config, "batch size must be positive");
    weights.validate();
    patch.validate();
  }
};

inline StageConfig stage_defaults(int steps, int epochs, double lr, int batch_size) {
  StageConfig c;
  c.steps = steps;
  c.epochs = epochs;
  c.lr = lr;
  c.batch_size = batch_size;
  return c;
}
inline StageConfig stage1_defaults() { return stage_defaults(200, 0, 5e-4, 8); }
inline StageConfig stage2_defaults() { return stage_defaults(0, 200, 1e-3, 32); }
inline StageConfig stage3_defaults() { return stage_defaults(0, 30, 1e-4, 8); }
inline StageConfig stage4_defaults() { return stage_defaults(50, 0, 5e-4, 8); }

/// Supervision triple harvested by stage 1.
struct PairRecord {
  std::string prompt;
  Eigen::VectorXd text_embedding;
  Eigen::VectorXd style_embedding;
  double loss = 0.0;
  int steps = 0;

  bool operator==(const PairRecord& o) const {
    return prompt == o.prompt && text_embedding == o.text_embedding && style_embedding == o.style_embedding &&
           loss == o.loss && steps == o.steps;
  }
};

struct TraceRow {
  int epoch = 0;
  std::string term;
  double value = 0.0;
};

template <typename Scalar>
struct TrainResult {
  TextStyleNet<Scalar> net;
  std::vector<TraceRow> trace;

  /// Values of `term` ordered by epoch.
  std::vector<double> series(const std::string& term) const {
    std::vector<double> v;
    for (const auto& r : trace)
      if (r.term == term) v.push_back(r.value);
    return v;
  }
};

struct QueryLoss {
  LossParts parts;
  double total = 0.0;
};

template <typename Scalar>
StyleObjective<Scalar> make_objective(const Backends<Scalar>& backends, std::shared_ptr<const StyleDistribution> dist,
                                      const StageConfig& cfg) {
  return StyleObjective<Scalar>(backends, std::move(dist), cfg.weights, cfg.patch, cfg.source_text);
}

template <typename Scalar>
std::vector<ContentContext<Scalar>> content_contexts(const StyleObjective<Scalar>& obj, const std::vector<Image<Scalar>>& pool) {
  if (pool.empty()) fail(Errc::invalid_input, "content pool is empty");
  std::vector<ContentContext<Scalar>> out;
  out.reserve(pool.size());
  for (const auto& img : pool) out.push_back(obj.content(img));
  return out;
}

/// Mean objective over the content pool with fixed patch draws, so values are
/// comparable across training steps.
template <typename Scalar>
QueryLoss evaluate_style(const StyleObjective<Scalar>& obj, const Vec<Scalar>& style, const QueryContext<Scalar>& q,
                         const std::vector<ContentContext<Scalar>>& contents, std::uint64_t seed) {
  QueryLoss out;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const auto v = obj.evaluate(style, q, contents[i], derive_seed(seed, fnv1a64("eval"), i), false);
    out.parts.dir += v.parts.dir;
    out.parts.patch += v.parts.patch;
    out.parts.dis += v.parts.dis;
    out.total += v.total;
  }
  const double n = double(contents.size());
  out.parts.dir /= n;
  out.parts.patch /= n;
  out.parts.dis /= n;
  out.total /= n;
  return out;
}

/// Loss of `net`'s prediction for `prompt`, averaged over `pool`.
template <typename Scalar>
QueryLoss evaluate_query(const TextStyleNet<Scalar>& net, const std::string& prompt, const std::vector<Image<Scalar>>& pool,
                         const Backends<Scalar>& backends, std::shared_ptr<const StyleDistribution> dist, const StageConfig& cfg) {
  const auto obj = make_objective(backends, std::move(dist), cfg);
  const auto q = obj.query(prompt);
  return evaluate_style(obj, net.forward(q.text_embedding), q, content_contexts(obj, pool), cfg.seed);
}

inline void check_finite_loss(double value, const std::string& where, long step) {
  if (!std::isfinite(value)) fail(Errc::diverged, where + ": loss became non-finite at step " + std::to_string(step));
}

// ---------------------------------------------------------------------------
// Stage 1

/// Overfits a freshly initialized network to one prompt and records its final
/// prediction as the style label.
template <typename Scalar>
PairRecord stage1_generate_pair(const std::string& prompt, const std::vector<ContentContext<Scalar>>& contents,
                                const StyleObjective<Scalar>& obj, const StageConfig& cfg) {
  if (contents.empty()) fail(Errc::invalid_input, "content pool is empty");
  const std::uint64_t prompt_seed = derive_seed(cfg.seed, "stage1:" + prompt);
  const auto q = obj.query(prompt);
  auto net = TextStyleNet<Scalar>::init(prompt_seed);
  Rng rng(derive_seed(prompt_seed, "content-sampling"));

  Vec<Scalar> style;
  if (cfg.optimize_embedding) {
    Vec<Scalar> u = net.forward(q.text_embedding).array().atanh().matrix();
    VectorAdam<Scalar> adam({.lr = cfg.lr}, u.size());
    for (int step = 0; step < cfg.steps; ++step) {
      const int ci = uniform_index(rng, int(contents.size()));
      const Vec<Scalar> s = u.array().tanh().matrix();
      const auto v = obj.evaluate(s, q, contents[std::size_t(ci)], derive_seed(prompt_seed, std::uint64_t(step)), true);
      check_finite_loss(v.total, "stage 1 '" + prompt + "'", step);
      const Vec<Scalar> gu = v.grad_style.cwiseProduct((Scalar(1) - s.array().square()).matrix());
      adam.step(u, gu);
    }
    style = u.array().tanh().matrix();
  } else {
    Adam<Scalar> adam({.lr = cfg.lr});
    for (int step = 0; step < cfg.steps; ++step) {
      const int ci = uniform_index(rng, int(contents.size()));
      const auto tape = net.forward_tape(q.text_embedding);
      const auto v = obj.evaluate(Vec<Scalar>(tape.out.col(0)), q, contents[std::size_t(ci)],
                                  derive_seed(prompt_seed, std::uint64_t(step)), true);
      check_finite_loss(v.total, "stage 1 '" + prompt + "'", step);
      adam.step(net.params, net.backward(tape, v.grad_style));
    }
    style = net.forward(q.text_embedding);
  }
  if (!style.allFinite()) fail(Errc::diverged, "stage 1 '" + prompt + "': prediction is not finite");

  PairRecord rec;
  rec.prompt = prompt;
  rec.text_embedding = q.text_embedding.template cast<double>();
  rec.style_embedding = style.template cast<double>();
  rec.loss = evaluate_style(obj, style, q, contents, cfg.seed).total;
  rec.steps = cfg.steps;
  return rec;
}

template <typename Scalar>
PairRecord stage1_generate_pair(const std::string& prompt, const std::vector<Image<Scalar>>& pool, const Backends<Scalar>& backends,
                                std::shared_ptr<const StyleDistribution> dist, const StageConfig& cfg) {
  cfg.validate();
  const auto obj = make_objective(backends, std::move(dist), cfg);
  return stage1_generate_pair(prompt, content_contexts(obj, pool), obj, cfg);
}

/// Stage 1 over many prompts; prompts are independent and run concurrently,
/// results keep the input order.
template <typename Scalar>
std::vector<PairRecord> stage1_generate_pairs(const std::vector<std::string>& prompts, const std::vector<Image<Scalar>>& pool,
                                              const Backends<Scalar>& backends, std::shared_ptr<const StyleDistribution> dist,
                                              const StageConfig& cfg) {
  cfg.validate();
  const auto obj = make_objective(backends, std::move(dist), cfg);
  const auto contents = content_contexts(obj, pool);
  std::vector<PairRecord> out(prompts.size());
  parallel_for(prompts.size(), cfg.threads, [&](std::size_t i) { out[i] = stage1_generate_pair(prompts[i], contents, obj, cfg); });
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2

template <typename Scalar>
double pair_mse(const TextStyleNet<Scalar>& net, const Mat<Scalar>& inputs, const Mat<Scalar>& targets) {
  return double((net.forward_batch(inputs) - targets).squaredNorm()) / double(targets.size());
}

/// Supervised regression of the pair labels with a mean squared error.
template <typename Scalar>
TrainResult<Scalar> stage2_pretrain(const std::vector<PairRecord>& pairs, const StageConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) fail(Errc::insufficient_data, "pre-training needs at least one pair");
  const Eigen::Index n = Eigen::Index(pairs.size());
  Mat<Scalar> x(kEmbedDim, n), y(kStyleDim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[std::size_t(i)];
    if (p.text_embedding.size() != kEmbedDim || p.style_embedding.size() != kStyleDim)
      fail(Errc::shape_mismatch, "pair '" + p.prompt + "' has wrong embedding dimensions");
    x.col(i) = p.text_embedding.template cast<Scalar>();
    y.col(i) = p.style_embedding.template cast<Scalar>();
  }

  TrainResult<Scalar> result{TextStyleNet<Scalar>::init(derive_seed(cfg.seed, "stage2")), {}};
  auto& net = result.net;
  Adam<Scalar> adam({.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, "stage2-shuffle"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  result.trace.push_back({0, "mse", pair_mse(net, x, y)});

  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Mat<Scalar> xb(kEmbedDim, b), yb(kStyleDim, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        xb.col(j) = x.col(order[std::size_t(start + j)]);
        yb.col(j) = y.col(order[std::size_t(start + j)]);
      }
      const auto tape = net.forward_tape(xb);
      const Mat<Scalar> grad = (tape.out - yb) * Scalar(2.0 / double(yb.size()));
      adam.step(net.params, net.backward(tape, grad));
      ++step;
    }
    const double mse = pair_mse(net, x, y);
    check_finite_loss(mse, "stage 2", step);
    result.trace.push_back({epoch, "mse", mse});
  }
  net.stage = TrainingStage::pretrained;
  return result;
}

// ---------------------------------------------------------------------------
// Stage 3

/// Mean predicted-style Mahalanobis distance over prompts.
template <typename Scalar>
double mean_mahalanobis(const TextStyleNet<Scalar>& net, const std::vector<std::string>& prompts,
                        const EmbedderBackend<Scalar>& embedder, const StyleDistribution& dist) {
  double sum = 0.0;
  for (const auto& p : prompts) sum += dist.mahalanobis(Eigen::VectorXd(net.forward(embedder.embed_text(p)).template cast<double>()));
  return prompts.empty() ? 0.0 : sum / double(prompts.size());
}

/// Fixed evaluation set: prompt i with content i mod pool, fixed patch draws.
template <typename Scalar>
QueryLoss evaluate_corpus(const TextStyleNet<Scalar>& net, const StyleObjective<Scalar>& obj,
                          const std::vector<QueryContext<Scalar>>& queries, const std::vector<ContentContext<Scalar>>& contents,
                          std::uint64_t seed) {
  QueryLoss out;
  if (queries.empty()) return out;
  Mat<Scalar> x(kEmbedDim, Eigen::Index(queries.size()));
  for (std::size_t i = 0; i < queries.size(); ++i) x.col(Eigen::Index(i)) = queries[i].text_embedding;
  const Mat<Scalar> styles = net.forward_batch(x);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto v = obj.evaluate(Vec<Scalar>(styles.col(Eigen::Index(i))), queries[i], contents[i % contents.size()],
                                derive_seed(seed, fnv1a64("eval"), i), false);
    out.parts.dir += v.parts.dir;
    out.parts.patch += v.parts.patch;
    out.parts.dis += v.parts.dis;
    out.total += v.total;
  }
  const double n = double(queries.size());
  out.parts.dir /= n;
  out.parts.patch /= n;
  out.parts.dis /= n;
  out.total /= n;
  return out;
}

/// End-to-end training of the network through the frozen backends on the
/// weighted objective. Trace terms per epoch (epoch 0 = before training):
/// total/dir/patch/dis on the fixed evaluation set, train_total on the
/// sampled batches.
template <typename Scalar>
TrainResult<Scalar> stage3_integrated_train(TextStyleNet<Scalar> net, const std::vector<std::string>& prompts,
                                            const std::vector<Image<Scalar>>& pool, const Backends<Scalar>& backends,
                                            std::shared_ptr<const StyleDistribution> dist, const StageConfig& cfg) {
  cfg.validate();
  if (prompts.empty()) fail(Errc::insufficient_data, "integrated training needs at least one prompt");
  if (!dist && cfg.weights.lambda_dis > 0.0)
    fail(Errc::invalid_config, "integrated training with lambda_dis > 0 needs a style distribution");
  const auto obj = make_objective(backends, dist, cfg);
  const auto contents = content_contexts(obj, pool);
  std::vector<QueryContext<Scalar>> queries;
  for (const auto& p : prompts) queries.push_back(obj.query(p));

  TrainResult<Scalar> result{std::move(net), {}};
  auto record = [&](int epoch) {
    const auto e = evaluate_corpus(result.net, obj, queries, contents, cfg.seed);
    result.trace.push_back({epoch, "total", e.total});
    result.trace.push_back({epoch, "dir", e.parts.dir});
    result.trace.push_back({epoch, "patch", e.parts.patch});
    result.trace.push_back({epoch, "dis", e.parts.dis});
  };
  record(0);

  Adam<Scalar> adam({.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, "stage3"));
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t b = std::min(std::size_t(cfg.batch_size), order.size() - start);
      Mat<Scalar> x(kEmbedDim, Eigen::Index(b));
      for (std::size_t j = 0; j < b; ++j) x.col(Eigen::Index(j)) = queries[order[start + j]].text_embedding;
      const auto tape = result.net.forward_tape(x);
      Mat<Scalar> grad(kStyleDim, Eigen::Index(b));
      for (std::size_t j = 0; j < b; ++j) {
        const int ci = uniform_index(rng, int(contents.size()));
        const auto v = obj.evaluate(Vec<Scalar>(tape.out.col(Eigen::Index(j))), queries[order[start + j]],
                                    contents[std::size_t(ci)], derive_seed(cfg.seed, std::uint64_t(step), j), true);
        check_finite_loss(v.total, "stage 3", step);
        train_sum += v.total;
        grad.col(Eigen::Index(j)) = v.grad_style / Scalar(double(b));
      }
      adam.step(result.net.params, result.net.backward(tape, grad));
      ++step;
    }
    result.trace.push_back({epoch, "train_total", train_sum / double(order.size())});
    record(epoch);
  }
  result.net.stage = TrainingStage::integrated;
  return result;
}

// ---------------------------------------------------------------------------
// Stage 4

/// Per-query optimization of the last layer only. Trace: total at step 0 and
/// after the final step, on fixed patch draws.
template <typename Scalar>
TrainResult<Scalar> stage4_finetune(TextStyleNet<Scalar> net, const std::string& prompt, const Image<Scalar>& content,
                                    const Backends<Scalar>& backends, std::shared_ptr<const StyleDistribution> dist,
                                    const StageConfig& cfg) {
  cfg.validate();
  if (net.stage != TrainingStage::integrated && net.stage != TrainingStage::pretrained)
    fail(Errc::invalid_input, "fine-tuning expects a pretrained or integrated network, got " + std::string(to_string(net.stage)));
  const auto obj = make_objective(backends, std::move(dist), cfg);
  const auto q = obj.query(prompt);
  const std::vector<ContentContext<Scalar>> contents{obj.content(content)};

  TrainResult<Scalar> result{std::move(net), {}};
  result.trace.push_back({0, "total", evaluate_style(obj, result.net.forward(q.text_embedding), q, contents, cfg.seed).total});
  const ParamMask mask = finetune_mask();
  Adam<Scalar> adam({.lr = cfg.lr}, mask);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto tape = result.net.forward_tape(q.text_embedding);
    const auto v = obj.evaluate(Vec<Scalar>(tape.out.col(0)), q, contents[0], derive_seed(cfg.seed, fnv1a64("finetune"), std::uint64_t(step)), true);
    check_finite_loss(v.total, "fine-tuning", step);
    adam.step(result.net.params, result.net.backward(tape, v.grad_style, mask));
  }
  result.trace.push_back({cfg.steps, "total", evaluate_style(obj, result.net.forward(q.text_embedding), q, contents, cfg.seed).total});
  result.net.stage = TrainingStage::finetuned;
  return result;
}

// ---------------------------------------------------------------------------
// Inference

/// Single forward pass: embed text, predict the style, apply it.
template <typename Scalar>
Image<Scalar> stylize(const TextStyleNet<Scalar>& net, const std::string& prompt, const Image<Scalar>& content,
                      const Backends<Scalar>& backends) {
  require_pipeline_image(content, "content image");
  return backends.stylizer->apply(content, net.forward(backends.embedder->embed_text(prompt)));
}

// ---------------------------------------------------------------------------
// Files

/// One JSON object per line: prompt, text_embedding, style_embedding, loss, steps.
inline std::string serialize_pairs(const std::vector<PairRecord>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["prompt"] = p.prompt;
    j["text_embedding"] = std::vector<double>(p.text_embedding.data(), p.text_embedding.data() + p.text_embedding.size());
    j["style_embedding"] = std::vector<double>(p.style_embedding.data(), p.style_embedding.data() + p.style_embedding.size());
    j["loss"] = p.loss;
    j["steps"] = p.steps;
    out += j.dump() + "\n";
  }
  return out;
}

inline void save_pairs(const std::vector<PairRecord>& pairs, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_pairs(pairs));
}

inline std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PairRecord> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PairRecord p;
      p.prompt = j.at("prompt").get<std::string>();
      const auto t = j.at("text_embedding").get<std::vector<double>>();
      const auto s = j.at("style_embedding").get<std::vector<double>>();
      p.text_embedding = Eigen::Map<const Eigen::VectorXd>(t.data(), Eigen::Index(t.size()));
      p.style_embedding = Eigen::Map<const Eigen::VectorXd>(s.data(), Eigen::Index(s.size()));
      p.loss = j.at("loss").get<double>();
      p.steps = j.at("steps").get<int>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

/// CSV with header epoch,term,value.
inline std::string serialize_trace(const std::vector<TraceRow>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,term,value\n";
  for (const auto& r : trace) out << r.epoch << ',' << r.term << ',' << r.value << '\n';
  return out.str();
}

inline void save_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_trace(trace));
}

}  // namespace fcs
