#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmws/error.hpp"
#include "hmws/harness/config.hpp"
#include "hmws/harness/data.hpp"
#include "hmws/harness/train.hpp"

using nlohmann::json;
namespace h = hmws::harness;

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericalExit = 4;

json parse_overrides(const std::string& text) {
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw hmws::ConfigError("--model is not valid JSON: " + std::string(e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid memoised wake-sleep: data generation, training, evaluation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate or ingest a dataset");
  std::string domain, out, csv, model_text;
  std::uint64_t seed = 0;
  std::size_t count = 100;
  gen->add_option("--domain", domain, "timeseries | blocks2d | testbed")->required();
  gen->add_option("--seed", seed);
  gen->add_option("--count", count);
  gen->add_option("--out", out)->required();
  gen->add_option("--csv", csv, "ingest labelled rows instead of sampling (timeseries)");
  gen->add_option("--model", model_text, "JSON model overrides");

  auto* train = app.add_subcommand("train", "train from a JSON config");
  std::string config_path, resume;
  train->add_option("--config", config_path)->required();
  train->add_option("--resume", resume, "checkpoint directory to continue from");

  auto* eval = app.add_subcommand("eval", "IWAE log p of a checkpoint");
  std::string ckpt, data_dir, eval_out;
  int s_test = 100;
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--s-test", s_test);
  eval->add_option("--out", eval_out, "write the summary here instead of stdout");

  auto* plots = app.add_subcommand("export-plots", "CSV/JSON plot data for a finished run");
  std::string run_dir;
  plots->add_option("--run", run_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) {
      const json overrides = parse_overrides(model_text);
      if (!csv.empty()) {
        if (domain != "timeseries") throw hmws::ConfigError("--csv only applies to timeseries");
        auto report = h::ingest_timeseries(csv, seed, overrides.value("length", std::size_t{128}));
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
        h::save_dataset(out, report.data);
        std::cout << "ingested " << report.data.size() << " series into " << out << '\n';
      } else {
        const h::Dataset d = h::generate(domain, seed, count, overrides);
        h::save_dataset(out, d);
        std::cout << "wrote " << d.size() << " " << domain << " items to " << out << '\n';
      }
    } else if (*train) {
      h::Trainer t(h::load_config(config_path));
      if (!resume.empty()) t.resume(resume);
      t.run();
      std::cout << "trained to iteration " << t.state().iteration << "; outputs in " << t.config().output << '\n';
    } else if (*eval) {
      const json summary = h::eval_checkpoint(ckpt, h::load_dataset(data_dir), s_test);
      if (eval_out.empty()) {
        std::cout << summary.dump(2) << '\n';
      } else {
        std::ofstream(eval_out) << summary.dump(2) << '\n';
      }
    } else if (*plots) {
      h::export_plots(run_dir);
      std::cout << "plot data written to " << run_dir << "/plots\n";
    }
  } catch (const hmws::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const hmws::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalExit;
  } catch (const hmws::Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataExit;
  }
  return 0;
}
