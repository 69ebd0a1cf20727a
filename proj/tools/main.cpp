// fcs: command-line front end for prompt generation, the four training
// stages, inference, projection and benchmarking.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fcs/fcs.hpp"
#include "fcs/image_io.hpp"

namespace fs = std::filesystem;
using Real = float;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string backend = "toy";
  std::string embedder_model;
  std::string stylizer_model;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  unsigned threads = 0;
};

struct Contents {
  std::vector<std::string> paths;
  int synthetic = 0;
  int synthetic_size = 64;
};

void add_common(CLI::App* cmd, Common& c, bool with_backend, bool with_config) {
  if (with_backend) {
    cmd->add_option("--backend", c.backend, "Embedder/stylizer implementation")->check(CLI::IsMember({"toy", "pretrained"}));
    cmd->add_option("--embedder-model", c.embedder_model, "Embedder bundle (path or file:// URI, relative to FCS_CACHE_DIR)");
    cmd->add_option("--stylizer-model", c.stylizer_model, "Stylizer bundle (path or file:// URI, relative to FCS_CACHE_DIR)");
  }
  c.seed_opt = cmd->add_option("--seed", c.seed, "Global seed (overrides the config file)");
  if (with_config) {
    cmd->add_option("--config", c.config, "key = value file applied over the stage defaults")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "key=value override applied after --config")->take_all();
  }
  cmd->add_option("--out", c.out, "Output path")->required();
}

void add_contents(CLI::App* cmd, Contents& c) {
  cmd->add_option("--content", c.paths, "Content PNG files or directories of PNGs");
  cmd->add_option("--synthetic", c.synthetic, "Number of procedural content images to generate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--synthetic-size", c.synthetic_size, "Side length of procedural content images")->check(CLI::PositiveNumber);
}

fcs::StageConfig stage_config(fcs::StageConfig cfg, const Common& c) {
  if (!c.config.empty()) fcs::apply_config(cfg, fcs::parse_key_values(fcs::read_file(c.config), c.config));
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    fcs::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_opt && c.seed_opt->count()) cfg.seed = c.seed;
  if (c.threads) cfg.threads = c.threads;
  cfg.validate();
  return cfg;
}

fcs::Backends<Real> backends(const Common& c) {
  fcs::BackendOptions opts;
  opts.kind = c.backend;
  opts.embedder_model = c.embedder_model;
  opts.stylizer_model = c.stylizer_model;
  if (c.backend == "pretrained" && (c.embedder_model.empty() || c.stylizer_model.empty()))
    throw UsageError("--backend pretrained requires --embedder-model and --stylizer-model");
  return fcs::make_backends<Real>(opts);
}

std::vector<fcs::Image<Real>> load_contents(const Contents& c, std::uint64_t seed) {
  std::vector<fs::path> files;
  for (const auto& p : c.paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(p);
    }
  }
  std::vector<fcs::Image<Real>> pool;
  for (const auto& f : files) pool.push_back(fcs::read_png<Real>(f));
  for (int i = 0; i < c.synthetic; ++i)
    pool.push_back(fcs::synthetic_content<Real>(fcs::derive_seed(seed, fcs::fnv1a64("content"), std::uint64_t(i)),
                                                c.synthetic_size, c.synthetic_size));
  if (pool.empty()) throw UsageError("no content images: pass --content or --synthetic");
  return pool;
}

std::shared_ptr<const fcs::StyleDistribution> load_distribution(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const fcs::StyleDistribution>(fcs::StyleDistribution::load(path));
}

fcs::Checkpoint<Real> load_net(const std::string& path, const fcs::Backends<Real>* b) {
  auto ck = fcs::load_checkpoint<Real>(path);
  if (b && !ck.fingerprint.empty() && ck.fingerprint != b->fingerprint())
    std::cerr << "warning: " << path << " was trained with backends '" << ck.fingerprint << "', using '" << b->fingerprint() << "'\n";
  return ck;
}

std::vector<std::string> prompts_from(const std::string& file, const std::vector<std::string>& inline_prompts) {
  std::vector<std::string> prompts = inline_prompts;
  if (!file.empty()) {
    auto more = fcs::load_prompts(file);
    prompts.insert(prompts.end(), more.begin(), more.end());
  }
  if (prompts.empty()) throw UsageError("no prompts: pass --prompts or --prompt");
  return prompts;
}

/// Records a manifest next to each output.
class Run {
 public:
  Run(std::string command, std::vector<std::string> args) {
    m_.command = std::move(command);
    m_.arguments = std::move(args);
    m_.started = fcs::utc_timestamp();
  }
  void config(const fcs::StageConfig& cfg) {
    m_.config = fcs::config_snapshot(cfg);
    m_.seed = cfg.seed;
  }
  void seed(std::uint64_t s) { m_.seed = s; }
  void backends(const fcs::Backends<Real>& b) {
    m_.backend_fingerprints = {b.embedder->fingerprint(), b.stylizer->fingerprint()};
  }
  void output(const std::string& path) { m_.outputs.push_back(path); }
  void finish() {
    m_.finished = fcs::utc_timestamp();
    for (const auto& o : m_.outputs) fcs::write_manifest(m_, o);
  }

 private:
  fcs::RunManifest m_;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string trace_path_for(const std::string& out, const std::string& trace) {
  return trace.empty() ? out + ".trace.csv" : trace;
}

void print_trace_summary(const std::vector<fcs::TraceRow>& trace, const std::string& term) {
  double first = 0, last = 0;
  bool any = false;
  for (const auto& r : trace)
    if (r.term == term) {
      if (!any) first = r.value;
      last = r.value;
      any = true;
    }
  if (any) std::cout << term << ": " << first << " -> " << last << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-driven fast style transfer toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::vector<std::string> args(argv + 1, argv + argc);
  std::function<void()> action;

  // gen-prompts
  Common gp;
  std::string gp_bank;
  std::vector<std::string> gp_rules;
  auto* gen_prompts = app.add_subcommand("gen-prompts", "Build the prompt corpus from keyword lists");
  add_common(gen_prompts, gp, false, false);
  gen_prompts->add_option("--bank", gp_bank, "Keyword bank file (default: built-in lists)")->check(CLI::ExistingFile);
  gen_prompts->add_option("--rule", gp_rules, "Combination rule, e.g. color-texture or color-art-texture:500");
  gen_prompts->callback([&] {
    action = [&] {
      Run run("gen-prompts", args);
      const auto bank = gp_bank.empty() ? fcs::default_bank() : fcs::load_bank(gp_bank);
      std::vector<fcs::CombinationRule> rules;
      for (const auto& r : gp_rules) rules.push_back(fcs::parse_rule(r));
      if (gp_rules.empty()) rules = fcs::default_rules();
      const auto corpus = fcs::combine(bank, rules, gp.seed);
      fcs::save_corpus(corpus, gp.out);
      run.seed(gp.seed);
      run.output(gp.out);
      run.finish();
      std::cout << corpus.prompts.size() << " prompts -> " << gp.out << "\n";
    };
  });

  // gen-pairs (stage 1)
  Common pr;
  Contents pr_contents;
  std::string pr_prompts_file, pr_dist;
  std::vector<std::string> pr_prompts;
  auto* gen_pairs = app.add_subcommand("gen-pairs", "Stage 1: per-prompt optimization producing (text, style) pairs");
  add_common(gen_pairs, pr, true, true);
  add_contents(gen_pairs, pr_contents);
  gen_pairs->add_option("--prompts", pr_prompts_file, "Prompt file, one per line")->check(CLI::ExistingFile);
  gen_pairs->add_option("--prompt", pr_prompts, "Prompt (repeatable)");
  gen_pairs->add_option("--distribution", pr_dist, "Style distribution for the distribution loss")->check(CLI::ExistingFile);
  gen_pairs->add_option("--threads", pr.threads, "Worker threads (0 = all cores)");
  gen_pairs->callback([&] {
    action = [&] {
      Run run("gen-pairs", args);
      const auto cfg = stage_config(fcs::stage1_defaults(), pr);
      const auto b = backends(pr);
      const auto prompts = prompts_from(pr_prompts_file, pr_prompts);
      const auto pairs = fcs::stage1_generate_pairs(prompts, load_contents(pr_contents, cfg.seed), b, load_distribution(pr_dist), cfg);
      fcs::save_pairs(pairs, pr.out);
      run.config(cfg);
      run.backends(b);
      run.output(pr.out);
      run.finish();
      double mean = 0;
      for (const auto& p : pairs) mean += p.loss / double(pairs.size());
      std::cout << pairs.size() << " pairs -> " << pr.out << " (mean loss " << mean << ")\n";
    };
  });

  // fit-distribution
  Common fd;
  std::string fd_embeddings;
  double fd_ridge = fcs::kDefaultRidge;
  auto* fit_dist = app.add_subcommand("fit-distribution", "Fit the style-embedding normal distribution");
  add_common(fit_dist, fd, false, false);
  fit_dist->add_option("--embeddings", fd_embeddings, "Pairs file (.jsonl) or rows of whitespace/comma separated numbers")
      ->required()
      ->check(CLI::ExistingFile);
  fit_dist->add_option("--ridge", fd_ridge, "Diagonal regularization added before factorization")->check(CLI::NonNegativeNumber);
  fit_dist->callback([&] {
    action = [&] {
      Run run("fit-distribution", args);
      std::vector<Eigen::VectorXd> rows;
      if (fs::path(fd_embeddings).extension() == ".jsonl") {
        for (const auto& p : fcs::load_pairs(fd_embeddings)) rows.push_back(p.style_embedding);
      } else {
        std::istringstream in(fcs::read_file(fd_embeddings));
        std::string line;
        while (std::getline(in, line)) {
          std::replace(line.begin(), line.end(), ',', ' ');
          std::istringstream ls(line);
          std::vector<double> v;
          for (double x; ls >> x;) v.push_back(x);
          if (!v.empty()) rows.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), Eigen::Index(v.size())));
        }
      }
      for (const auto& r : rows)
        if (r.size() != rows.front().size()) fcs::fail(fcs::Errc::shape_mismatch, "embeddings have differing dimensions");
      const auto dist = fcs::StyleDistribution::fit(rows, fd_ridge);
      std::string source = fs::path(fd_embeddings).filename().string();
      if (fs::exists(fcs::manifest_path(fd_embeddings))) {
        const auto origin = fcs::read_manifest(fcs::manifest_path(fd_embeddings));
        for (const auto& f : origin.backend_fingerprints) source += "; " + f;
      }
      dist.save(fd.out, source);
      run.output(fd.out);
      run.finish();
      std::cout << "fitted " << dist.dim() << "-d distribution on " << dist.sample_count() << " embeddings -> " << fd.out << "\n";
    };
  });

  // pretrain (stage 2)
  Common pt;
  std::string pt_pairs, pt_trace;
  auto* pretrain = app.add_subcommand("pretrain", "Stage 2: supervised pre-training on generated pairs");
  add_common(pretrain, pt, false, true);
  pretrain->add_option("--pairs", pt_pairs, "Pairs file from gen-pairs")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--trace", pt_trace, "Loss trace CSV (default: <out>.trace.csv)");
  pretrain->callback([&] {
    action = [&] {
      Run run("pretrain", args);
      const auto cfg = stage_config(fcs::stage2_defaults(), pt);
      const auto result = fcs::stage2_pretrain<Real>(fcs::load_pairs(pt_pairs), cfg);
      const std::string trace = trace_path_for(pt.out, pt_trace);
      fcs::save_checkpoint(result.net, pt.out);
      fcs::save_trace(result.trace, trace);
      run.config(cfg);
      run.output(pt.out);
      run.output(trace);
      run.finish();
      print_trace_summary(result.trace, "mse");
    };
  });

  // train (stage 3)
  Common tr;
  Contents tr_contents;
  std::string tr_prompts_file, tr_init, tr_dist, tr_trace;
  std::vector<std::string> tr_prompts;
  auto* train = app.add_subcommand("train", "Stage 3: integrated training through the frozen backends");
  add_common(train, tr, true, true);
  add_contents(train, tr_contents);
  train->add_option("--prompts", tr_prompts_file, "Prompt file, one per line")->check(CLI::ExistingFile);
  train->add_option("--prompt", tr_prompts, "Prompt (repeatable)");
  train->add_option("--init", tr_init, "Starting checkpoint (default: fresh initialization)")->check(CLI::ExistingFile);
  train->add_option("--distribution", tr_dist, "Style distribution (required when lambda_dis > 0)")->check(CLI::ExistingFile);
  train->add_option("--trace", tr_trace, "Loss trace CSV (default: <out>.trace.csv)");
  train->callback([&] {
    action = [&] {
      Run run("train", args);
      const auto cfg = stage_config(fcs::stage3_defaults(), tr);
      const auto b = backends(tr);
      auto net = tr_init.empty() ? fcs::TextStyleNet<Real>::init(fcs::derive_seed(cfg.seed, "stage3-init")) : load_net(tr_init, &b).net;
      const auto result = fcs::stage3_integrated_train(std::move(net), prompts_from(tr_prompts_file, tr_prompts),
                                                       load_contents(tr_contents, cfg.seed), b, load_distribution(tr_dist), cfg);
      const std::string trace = trace_path_for(tr.out, tr_trace);
      fcs::save_checkpoint(result.net, tr.out, b.fingerprint());
      fcs::save_trace(result.trace, trace);
      run.config(cfg);
      run.backends(b);
      run.output(tr.out);
      run.output(trace);
      run.finish();
      print_trace_summary(result.trace, "total");
    };
  });

  // finetune (stage 4)
  Common ft;
  std::string ft_ckpt, ft_prompt, ft_content, ft_dist, ft_trace;
  auto* finetune = app.add_subcommand("finetune", "Stage 4: per-query fine-tuning of the last layer");
  add_common(finetune, ft, true, true);
  finetune->add_option("--ckpt", ft_ckpt, "Pretrained or integrated checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--prompt", ft_prompt, "Query prompt")->required();
  finetune->add_option("--content", ft_content, "Content PNG")->required()->check(CLI::ExistingFile);
  finetune->add_option("--distribution", ft_dist, "Style distribution")->check(CLI::ExistingFile);
  finetune->add_option("--trace", ft_trace, "Loss trace CSV (default: <out>.trace.csv)");
  finetune->callback([&] {
    action = [&] {
      Run run("finetune", args);
      const auto cfg = stage_config(fcs::stage4_defaults(), ft);
      const auto b = backends(ft);
      const auto result = fcs::stage4_finetune(load_net(ft_ckpt, &b).net, ft_prompt, fcs::read_png<Real>(ft_content), b,
                                               load_distribution(ft_dist), cfg);
      const std::string trace = trace_path_for(ft.out, ft_trace);
      fcs::save_checkpoint(result.net, ft.out, b.fingerprint());
      fcs::save_trace(result.trace, trace);
      run.config(cfg);
      run.backends(b);
      run.output(ft.out);
      run.output(trace);
      run.finish();
      print_trace_summary(result.trace, "total");
    };
  });

  // stylize
  Common st;
  std::string st_ckpt, st_prompt, st_content;
  auto* stylize = app.add_subcommand("stylize", "Stylize an image with a single forward pass");
  add_common(stylize, st, true, false);
  stylize->add_option("--ckpt", st_ckpt, "Network checkpoint")->required()->check(CLI::ExistingFile);
  stylize->add_option("--prompt", st_prompt, "Style prompt")->required();
  stylize->add_option("--content", st_content, "Content PNG")->required()->check(CLI::ExistingFile);
  stylize->callback([&] {
    action = [&] {
      Run run("stylize", args);
      const auto b = backends(st);
      const auto out = fcs::stylize(load_net(st_ckpt, &b).net, st_prompt, fcs::read_png<Real>(st_content), b);
      fcs::write_png(out, st.out);
      run.seed(st.seed);
      run.backends(b);
      run.output(st.out);
      run.finish();
    };
  });

  // project
  Common pj;
  std::string pj_pairs, pj_ckpt, pj_groups, pj_method = "tsne", pj_field = "style", pj_plot;
  fcs::TsneOptions pj_tsne;
  auto* project = app.add_subcommand("project", "2-D projection of embeddings with keyword groups");
  add_common(project, pj, true, false);
  project->add_option("--pairs", pj_pairs, "Pairs file providing prompts and embeddings")->required()->check(CLI::ExistingFile);
  project->add_option("--ckpt", pj_ckpt, "Project this network's predictions instead of the stored embeddings")
      ->check(CLI::ExistingFile);
  project->add_option("--field", pj_field, "Stored embedding to project")->check(CLI::IsMember({"style", "text"}));
  project->add_option("--groups", pj_groups, "Keyword-to-group file ('<keyword> <group>' per line)")->check(CLI::ExistingFile);
  project->add_option("--method", pj_method, "Projection method")->check(CLI::IsMember({"pca", "tsne"}));
  project->add_option("--perplexity", pj_tsne.perplexity, "t-SNE perplexity")->check(CLI::PositiveNumber);
  project->add_option("--iterations", pj_tsne.iterations, "t-SNE iterations")->check(CLI::PositiveNumber);
  project->add_option("--plot", pj_plot, "Scatter PNG (default: <out>.png)");
  project->callback([&] {
    action = [&] {
      Run run("project", args);
      const auto pairs = fcs::load_pairs(pj_pairs);
      if (pairs.size() < 3) fcs::fail(fcs::Errc::insufficient_data, "projection needs at least 3 embeddings");
      const Eigen::Index dim = pj_ckpt.empty() && pj_field == "text" ? fcs::kEmbedDim : fcs::kStyleDim;
      Eigen::MatrixXd points(Eigen::Index(pairs.size()), dim);
      if (!pj_ckpt.empty()) {
        const auto b = backends(pj);
        const auto net = load_net(pj_ckpt, &b).net;
        for (std::size_t i = 0; i < pairs.size(); ++i)
          points.row(Eigen::Index(i)) = net.forward(pairs[i].text_embedding.cast<Real>()).cast<double>().transpose();
      } else {
        for (std::size_t i = 0; i < pairs.size(); ++i)
          points.row(Eigen::Index(i)) = (pj_field == "text" ? pairs[i].text_embedding : pairs[i].style_embedding).transpose();
      }
      pj_tsne.seed = pj.seed;
      const Eigen::MatrixXd xy = pj_method == "pca" ? fcs::pca(points, 2).coords : fcs::tsne(points, pj_tsne);
      const auto groups = pj_groups.empty() ? fcs::KeywordGroups{} : fcs::parse_keyword_groups(fcs::read_file(pj_groups), pj_groups);
      std::vector<std::string> labels;
      std::vector<std::string> distinct;
      std::vector<int> group_ids;
      for (const auto& p : pairs) {
        labels.push_back(fcs::keyword_group(p.prompt, groups));
        auto it = std::find(distinct.begin(), distinct.end(), labels.back());
        if (it == distinct.end()) it = distinct.insert(distinct.end(), labels.back());
        group_ids.push_back(int(it - distinct.begin()));
      }
      std::ostringstream csv;
      csv.precision(10);
      csv << "prompt,group,x,y\n";
      for (std::size_t i = 0; i < pairs.size(); ++i)
        csv << csv_field(pairs[i].prompt) << ',' << csv_field(labels[i]) << ',' << xy(Eigen::Index(i), 0) << ',' << xy(Eigen::Index(i), 1) << '\n';
      const std::string plot = pj_plot.empty() ? pj.out + ".png" : pj_plot;
      fcs::write_file_atomic(pj.out, csv.str());
      fcs::write_scatter_png(xy, group_ids, plot);
      run.seed(pj.seed);
      run.output(pj.out);
      run.output(plot);
      run.finish();
      std::cout << pairs.size() << " points, " << distinct.size() << " groups -> " << pj.out << "\n";
    };
  });

  // bench
  Common bn;
  Contents bn_contents;
  std::string bn_ckpt, bn_prompt = "blue lines", bn_dist;
  fcs::BenchOptions bn_opts;
  int bn_stage1_steps = 200, bn_finetune_steps = 50;
  auto* bench = app.add_subcommand("bench", "Median wall-clock of stylize, fine-tune and stage-1 optimization");
  add_common(bench, bn, true, true);
  add_contents(bench, bn_contents);
  bench->add_option("--ckpt", bn_ckpt, "Pretrained or integrated checkpoint")->required()->check(CLI::ExistingFile);
  bench->add_option("--prompt", bn_prompt, "Query prompt");
  bench->add_option("--distribution", bn_dist, "Style distribution")->check(CLI::ExistingFile);
  bench->add_option("--trials", bn_opts.trials, "Timed trials per row")->check(CLI::Range(20, 1000000));
  bench->add_option("--warmup", bn_opts.warmup, "Untimed warm-up runs per row")->check(CLI::NonNegativeNumber);
  bench->add_option("--stage1-steps", bn_stage1_steps, "Stage-1 optimization steps")->check(CLI::PositiveNumber);
  bench->add_option("--finetune-steps", bn_finetune_steps, "Fine-tuning steps")->check(CLI::PositiveNumber);
  bench->callback([&] {
    action = [&] {
      Run run("bench", args);
      const auto cfg = stage_config(fcs::stage1_defaults(), bn);
      const auto b = backends(bn);
      bn_opts.stage1 = cfg;
      bn_opts.stage1.steps = bn_stage1_steps;
      bn_opts.finetune = cfg;
      bn_opts.finetune.steps = bn_finetune_steps;
      bn_opts.finetune.lr = fcs::stage4_defaults().lr;
      const auto rows = fcs::run_bench(load_net(bn_ckpt, &b).net, bn_prompt, load_contents(bn_contents, cfg.seed), b,
                                       load_distribution(bn_dist), bn_opts);
      const std::string csv = fcs::serialize_bench(rows);
      fcs::write_file_atomic(bn.out, csv);
      run.config(cfg);
      run.backends(b);
      run.output(bn.out);
      run.finish();
      std::cout << csv;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto selected = app.get_subcommands();
    std::cout << (selected.empty() ? app.help() : selected.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n";
    const auto selected = app.get_subcommands();
    std::cerr << (selected.empty() ? app.help() : selected.front()->help());
    return 2;
  }

  try {
    if (action) action();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const fcs::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
