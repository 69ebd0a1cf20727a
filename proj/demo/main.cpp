// Small end-to-end run with the toy backends: harvest pairs, pre-train,
// train through the backends, fine-tune one query and stylize.
//
// Usage: fcs_demo [output-dir]

#include <filesystem>
#include <iostream>

#include "fcs/fcs.hpp"
#include "fcs/image_io.hpp"

int main(int argc, char** argv) try {
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? argv[1] : "fcs_demo_out";
  const auto backends = fcs::make_backends<float>(fcs::BackendOptions{});

  auto desk = [](fcs::StageConfig cfg) {
    cfg.patch.patch_size = 32;
    cfg.patch.n_patches = 8;
    cfg.seed = 7;
    return cfg;
  };

  std::vector<fcs::Image<float>> pool;
  for (std::uint64_t i = 0; i < 2; ++i) pool.push_back(fcs::synthetic_content<float>(fcs::derive_seed(7, fcs::fnv1a64("content"), i), 64, 64));

  const std::vector<std::string> prompts{"red lines", "blue wave", "green knitted", "gold mosaic", "purple cracked", "white snow"};

  // Stage 1 without the distribution term, then fit the style distribution.
  auto s1 = desk(fcs::stage1_defaults());
  s1.steps = 40;
  s1.weights.lambda_dis = 0;
  const auto pairs = fcs::stage1_generate_pairs(prompts, pool, backends, nullptr, s1);
  for (const auto& p : pairs) std::cout << "pair  " << p.prompt << "  loss " << p.loss << "\n";
  std::vector<Eigen::VectorXd> styles;
  for (const auto& p : pairs) styles.push_back(p.style_embedding);
  const auto dist = std::make_shared<const fcs::StyleDistribution>(fcs::StyleDistribution::fit(styles, 1e-2));

  auto s2 = desk(fcs::stage2_defaults());
  s2.epochs = 100;
  const auto pre = fcs::stage2_pretrain<float>(pairs, s2);
  std::cout << "stage 2 mse " << pre.series("mse").front() << " -> " << pre.series("mse").back() << "\n";

  auto s3 = desk(fcs::stage3_defaults());
  s3.epochs = 3;
  const auto integrated = fcs::stage3_integrated_train(pre.net, prompts, pool, backends, dist, s3);
  std::cout << "stage 3 total " << integrated.series("total").front() << " -> " << integrated.series("total").back() << "\n";

  auto s4 = desk(fcs::stage4_defaults());
  s4.steps = 20;
  const auto tuned = fcs::stage4_finetune(integrated.net, "orange dotted", pool[0], backends, dist, s4);
  std::cout << "stage 4 total " << tuned.series("total").front() << " -> " << tuned.series("total").back() << "\n";

  fs::create_directories(out);
  fcs::write_png(pool[0], out / "content.png");
  fcs::write_png(fcs::stylize(integrated.net, "orange dotted", pool[0], backends), out / "integrated.png");
  fcs::write_png(fcs::stylize(tuned.net, "orange dotted", pool[0], backends), out / "finetuned.png");
  fcs::save_checkpoint(integrated.net, out / "integrated.fcsnet", backends.fingerprint());
  std::cout << "wrote " << out.string() << "\n";
  return 0;
} catch (const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  return 1;
}
