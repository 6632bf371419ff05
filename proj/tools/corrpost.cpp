// corrpost: correlation-filter post-processing experiment runner.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>

#include "corrpost/common/binary_io.hpp"
#include "corrpost/common/errors.hpp"
#include "corrpost/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace corrpost;
using namespace corrpost::pipeline;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "corrpost_run";
  std::optional<std::string> crop_mode;
  unsigned threads = 1;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> l2, lr;
};

PipelineConfig resolve_config(const GlobalOptions& g) {
  PipelineConfig cfg = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed) apply_seed(cfg, *g.seed);
  if (g.crop_mode) {
    cfg.crop_mode = crop_mode_from_string(*g.crop_mode);
    cfg.vehicles.crop_mode = cfg.faces.crop_mode = *g.crop_mode;
  }
  cfg.threads = g.threads;
  if (g.epochs) cfg.train.epochs = *g.epochs;
  if (g.batch_size) cfg.train.batch_size = *g.batch_size;
  if (g.l2) cfg.train.l2 = *g.l2;
  if (g.lr) cfg.train.adam.lr = *g.lr;
  cfg.train.validate();
  cfg.validate();
  return cfg;
}

void print_report(const fs::path& eval_dir) {
  const auto text = binio::read_file(eval_dir / "report.txt");
  std::cout.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation-filter response post-processing: filters, metrics, CNN and reports"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config overlaid on the defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed for corpora and training");
  app.add_option("--out-dir", g.out_dir, "Run directory")->capture_default_str();
  app.add_option("--crop-mode", g.crop_mode, "Response crop")->check(CLI::IsMember({"center", "peak"}));
  app.add_option("--threads", g.threads, "Worker threads for generation, correlation and inference")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--epochs", g.epochs, "Classifier training epochs (overrides the config)");
  app.add_option("--batch-size", g.batch_size, "Classifier minibatch size (overrides the config)");
  app.add_option("--l2", g.l2, "Classifier L2 weight penalty (overrides the config)");
  app.add_option("--lr", g.lr, "Adam learning rate (overrides the config)");

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "Render both synthetic corpora"},
      {"train-filter", "Synthesize OT MACH and MINACE filters per family and resolution"},
      {"correlate", "Correlate every scene; write metrics and 32x32 patches"},
      {"prep", "Assign sample roles (filter training, CNN training, test)"},
      {"train-cnn", "Train the classifier on OT MACH responses"},
      {"eval", "Score every method on every image set and write the report"},
      {"cross-eval", "Apply the frozen classifier to the face corpus"},
      {"report", "Print the evaluation report, producing it if needed"},
      {"print-config", "Print the resolved configuration as JSON"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    const PipelineConfig cfg = resolve_config(g);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "print-config") {
      std::cout << cfg.to_json().dump(2) << "\n";
      return 0;
    }
    Pipeline p(cfg, g.out_dir, [](const std::string& msg) { std::cerr << msg << std::endl; });
    if (cmd == "report") {
      p.ensure(Stage::kEval);
      print_report(p.stage_dir(Stage::kEval));
      return 0;
    }
    for (Stage s : kAllStages) {
      if (to_string(s) == cmd) p.run(s);
    }
    if (cmd == "eval") print_report(p.stage_dir(Stage::kEval));
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return static_cast<int>(ExitCode::kData);
  }
}
