#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include "texgraph/pipeline.hpp"

namespace tp = texgraph::pipeline;

namespace {

// Exit codes: 0 success, 1 numerical failure, 2 input or schema failure.
constexpr int kOk = 0;
constexpr int kNumerical = 1;
constexpr int kInput = 2;

void print_warnings(const tp::RunManifest& m) {
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled tensor-matrix knowledge graph embedding"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tp::kVersion));

  tp::IngestOptions ingest_opts;
  std::string triplets, data_dir, out_dir, model_dir, evalspec, out_csv;
  std::string types_file;

  auto* ingest = app.add_subcommand("ingest", "Parse a triplet TSV into a vocabulary and block layout");
  ingest->add_option("triplets", triplets, "Triplet file: head<TAB>relation<TAB>tail")->required();
  ingest->add_option("out_dir", out_dir, "Output directory")->required();
  ingest->add_option("--entity-sep", ingest_opts.entity_sep, "Separator between type and id")
      ->capture_default_str();
  ingest->add_flag("--coerce", ingest_opts.coerce,
                   "Split relations used with several type signatures into name@head:tail");
  ingest->add_flag("--skip-malformed", ingest_opts.skip_malformed, "Skip malformed lines with a warning");
  ingest->add_option("--type-order", types_file, "File listing entity type names, one per line");

  texgraph::TrainConfig cfg;
  std::string init = "spectral";
  auto* train = app.add_subcommand("train", "Fit coupled factors to an ingested graph");
  train->add_option("data_dir", data_dir, "Directory written by ingest")->required();
  train->add_option("out_dir", out_dir, "Model directory")->required();
  train->add_option("--rank", cfg.rank, "Embedding rank F")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--sweeps", cfg.max_sweeps, "ALS sweeps")->capture_default_str();
  train->add_option("--ridge", cfg.ridge, "Ridge weight lambda")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  train->add_option("--init", init, "Initialization")
      ->capture_default_str()
      ->check(CLI::IsMember({"random", "spectral"}));
  train->add_option("--tolerance", cfg.tolerance, "Stop when the relative loss drop falls below this (0 = off)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Rank candidate drugs and count reference hits");
  evaluate->add_option("model_dir", model_dir, "Directory written by train")->required();
  evaluate->add_option("evalspec", evalspec, "Eval spec JSON")->required();
  evaluate->add_option("out_dir", out_dir, "Report directory")->required();

  auto* exporter = app.add_subcommand("export", "Write all entity embeddings to one CSV");
  exporter->add_option("model_dir", model_dir, "Directory written by train")->required();
  exporter->add_option("out_csv", out_csv, "Output CSV")->required();

  std::string kind = "planted";
  std::size_t extra_edges = 200000;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic knowledge graph");
  synth->add_option("out_dir", out_dir, "Output directory")->required();
  synth->add_option("--kind", kind, "drkg-mock: 13-type schema mock; planted: small graph with an eval spec")
      ->capture_default_str()
      ->check(CLI::IsMember({"drkg-mock", "planted"}));
  synth->add_option("--extra-edges", extra_edges, "Random edges beyond entity coverage (drkg-mock)")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; usage errors are input failures.
    return app.exit(e) == 0 ? kOk : kInput;
  }

  try {
    if (*ingest) {
      if (!types_file.empty()) ingest_opts.type_order = texgraph::io::read_lines(types_file);
      auto m = tp::cmd_ingest(triplets, out_dir, ingest_opts);
      print_warnings(m);
      const auto manifest = texgraph::io::read_json(std::filesystem::path(out_dir) / texgraph::io::kBlockManifest);
      std::cerr << "ingested " << manifest.at("edges").get<std::size_t>() << " edges: "
                << manifest.at("entity_types").get<std::size_t>() << " types, "
                << manifest.at("tensor_blocks").get<std::size_t>() << " tensor blocks, "
                << manifest.at("matrix_blocks").get<std::size_t>() << " matrix blocks\n";
    } else if (*train) {
      cfg.init = init == "random" ? texgraph::InitMode::random : texgraph::InitMode::spectral;
      auto log = [](const texgraph::SweepRecord& r) {
        char line[128];
        std::snprintf(line, sizeof line, "sweep %zu loss %.10e time %.3fs", r.sweep, r.loss.total(), r.seconds);
        std::cerr << line << '\n';
      };
      auto m = tp::cmd_train(data_dir, out_dir, cfg, log);
      print_warnings(m);
    } else if (*evaluate) {
      texgraph::HitSummary hits;
      auto m = tp::cmd_evaluate(model_dir, evalspec, out_dir, &hits);
      print_warnings(m);
      for (const auto& [k, n] : hits.hits)
        std::cerr << "hits@" << k << " " << n << " of " << hits.reference_known << '\n';
    } else if (*exporter) {
      tp::cmd_export(model_dir, out_csv);
    } else if (*synth) {
      tp::cmd_synth(kind == "drkg-mock" ? tp::SynthKind::drkg_mock : tp::SynthKind::planted, out_dir,
                    synth_seed, extra_edges);
    }
  } catch (const texgraph::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const texgraph::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}
