#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "texgraph/texgraph.hpp"

using namespace texgraph;
namespace fs = std::filesystem;

namespace {

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("texgraph_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path path(const std::string& name) const { return root_ / name; }

  fs::path write_file(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  fs::path root_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// run.json with the wall-clock phase timings removed.
nlohmann::json manifest_without_timings(const fs::path& dir) {
  auto j = io::read_json(dir / pipeline::kRunManifest);
  j.erase("timings");
  return j;
}

const char* kSmallGraph =
    "Compound::c0\ttreats\tDisease::d0\n"
    "Compound::c1\ttreats\tDisease::d1\n"
    "Compound::c2\tinhibits\tDisease::d0\n"
    "Compound::c0\ttargets\tGene::g0\n"
    "Compound::c1\ttargets\tGene::g1\n"
    "Gene::g0\tinteracts\tGene::g1\n"
    "Gene::g1\tinteracts\tGene::g2\n"
    "Disease::d1\tassociates\tGene::g2\n"
    "Compound::c0\ttreats\tDisease::d0\n";

}  // namespace

TEST(FormatDouble, RoundTripsBitExactly) {
  std::mt19937_64 rng(1);
  std::vector<double> values{0.0, -0.0, 0.1, 1.0 / 3.0, 1e-300, -2.5e300, std::numeric_limits<double>::denorm_min()};
  std::normal_distribution<double> normal;
  for (int i = 0; i < 200; ++i) values.push_back(normal(rng) * std::pow(10.0, double(int(rng() % 40) - 20)));
  for (double v : values) {
    const double back = io::parse_double(io::format_double(v), "test");
    EXPECT_EQ(std::signbit(back), std::signbit(v));
    EXPECT_EQ(back, v) << io::format_double(v);
  }
}

TEST_F(Workspace, FactorCsvRoundTrip) {
  DenseMatrix m(3, 2, {1.5, -2.0, 1e-17, 3.0, 0.1, -0.0});
  const std::vector<std::string> names{"plain", "with,comma", "with\"quote"};
  io::write_factor_csv(path("f.csv"), "entity_raw_id", names, m);
  const auto t = io::read_factor_csv(path("f.csv"));
  EXPECT_EQ(t.names, names);
  EXPECT_EQ(t.values, m);
  EXPECT_EQ(slurp(path("f.csv")).substr(0, 23), "entity_raw_id,f0,f1\npla");
}

TEST_F(Workspace, FactorCsvWrongFieldCountIsInputError) {
  write_file("bad.csv", "entity_raw_id,f0,f1\na,1\n");
  EXPECT_THROW(io::read_factor_csv(path("bad.csv")), InputError);
}

TEST_F(Workspace, VocabularyRoundTrip) {
  std::istringstream in(kSmallGraph);
  const auto v = build_vocabulary(parse_triplets(in));
  io::write_vocabulary(root_, v);
  const auto back = io::read_vocabulary(root_);
  EXPECT_EQ(back.types(), v.types());
  for (Index t = 0; t < v.type_count(); ++t) EXPECT_EQ(back.entities(t), v.entities(t));
  ASSERT_EQ(back.relation_count(), v.relation_count());
  for (Index r = 0; r < v.relation_count(); ++r) {
    EXPECT_EQ(back.relation_info(r).name, v.relation_info(r).name);
    EXPECT_EQ(back.relation_info(r).block, v.relation_info(r).block);
    EXPECT_EQ(back.relation_info(r).slab, v.relation_info(r).slab);
    EXPECT_EQ(back.relation_info(r).head_type, v.relation_info(r).head_type);
  }
}

TEST_F(Workspace, IngestWritesDeterministicOutputs) {
  const auto triplets = write_file("kg.tsv", kSmallGraph);
  pipeline::cmd_ingest(triplets, path("a"));
  pipeline::cmd_ingest(triplets, path("b"));
  for (const char* f : {io::kTypesFile, io::kEntitiesFile, io::kRelationsFile, io::kEdgesFile, io::kBlockManifest})
    EXPECT_EQ(slurp(path("a") / f), slurp(path("b") / f)) << f;
  EXPECT_EQ(manifest_without_timings(path("a")), manifest_without_timings(path("b")));

  const auto manifest = io::read_json(path("a") / io::kBlockManifest);
  EXPECT_EQ(manifest.at("edges"), 8);
  EXPECT_EQ(manifest.at("entity_types"), 3);
  const auto run = io::read_json(path("a") / pipeline::kRunManifest);
  EXPECT_EQ(run.at("inputs").at(triplets.string()), pipeline::sha256_file(triplets));
  EXPECT_EQ(run.at("version"), "0.1.0");
}

TEST_F(Workspace, IngestMissingInputIsInputError) {
  EXPECT_THROW(pipeline::cmd_ingest(path("absent.tsv"), path("out")), InputError);
  EXPECT_THROW(pipeline::load_ingested(path("absent")), InputError);
}

TEST(Sha256, KnownDigest) {
  const auto p = fs::temp_directory_path() / "texgraph_sha_abc.txt";
  std::ofstream(p) << "abc";
  EXPECT_EQ(pipeline::sha256_file(p), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::remove(p);
}

TEST_F(Workspace, ZeroSweepTrainingStoresRandomInit) {
  pipeline::cmd_ingest(write_file("kg.tsv", kSmallGraph), path("data"));
  TrainConfig cfg;
  cfg.rank = 3;
  cfg.max_sweeps = 0;
  cfg.seed = 17;
  cfg.init = InitMode::random;
  pipeline::cmd_train(path("data"), path("model"), cfg);
  const auto data = pipeline::load_ingested(path("data"));
  const auto model = pipeline::load_model(path("model"));
  const auto init = random_factors(data.vocab.type_sizes(), data.blocks, 3, 17);
  EXPECT_EQ(model.factors.entity, init.entity);
  EXPECT_EQ(model.factors.relation, init.relation);
  const auto fm = io::read_json(path("model") / io::kFactorManifest);
  EXPECT_EQ(fm.at("sweeps_run"), 0);
  EXPECT_EQ(fm.at("loss_trace").size(), 1u);
}

TEST_F(Workspace, TrainingIsByteReproducible) {
  pipeline::cmd_ingest(write_file("kg.tsv", kSmallGraph), path("data"));
  TrainConfig cfg;
  cfg.rank = 2;
  cfg.max_sweeps = 5;
  cfg.seed = 3;
  cfg.init = InitMode::random;
  pipeline::cmd_train(path("data"), path("m1"), cfg);
  pipeline::cmd_train(path("data"), path("m2"), cfg);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(path("m1"))) {
    const auto name = e.path().filename();
    if (name == pipeline::kRunManifest) continue;
    EXPECT_EQ(slurp(e.path()), slurp(path("m2") / name)) << name;
    ++files;
  }
  EXPECT_GT(files, 4u);
  EXPECT_EQ(manifest_without_timings(path("m1")), manifest_without_timings(path("m2")));
}

TEST_F(Workspace, EvaluationIsDeterministic) {
  pipeline::cmd_ingest(write_file("kg.tsv", kSmallGraph), path("data"));
  TrainConfig cfg;
  cfg.rank = 2;
  cfg.max_sweeps = 3;
  cfg.init = InitMode::random;
  pipeline::cmd_train(path("data"), path("model"), cfg);
  write_file("candidates.txt", "Compound::c0\nCompound::c1\nCompound::c2\n");
  write_file("reference.txt", "Compound::c2\n");
  write_file("spec.json",
             R"({"diseases": ["Disease::d0"], "relations": ["treats", "inhibits"],
                 "candidates_file": "candidates.txt", "reference_file": "reference.txt",
                 "excluded": [], "k_values": [1, 2]})");
  HitSummary h;
  pipeline::cmd_evaluate(path("model"), path("spec.json"), path("e1"), &h);
  pipeline::cmd_evaluate(path("model"), path("spec.json"), path("e2"));
  EXPECT_EQ(slurp(path("e1") / pipeline::kReportFile), slurp(path("e2") / pipeline::kReportFile));
  EXPECT_EQ(slurp(path("e1") / pipeline::kSummaryFile), slurp(path("e2") / pipeline::kSummaryFile));
  EXPECT_EQ(io::read_lines(path("e1") / pipeline::kReportFile).size(), 3u);
  EXPECT_EQ(h.hits.size(), 2u);
}

TEST_F(Workspace, EvalSpecWithoutCandidatesIsInputError) {
  write_file("spec.json", R"({"diseases": ["Disease::d0"], "relations": ["treats"]})");
  EXPECT_THROW(io::read_eval_spec(path("spec.json")), InputError);
}

TEST_F(Workspace, ExportListsEveryEntity) {
  pipeline::cmd_ingest(write_file("kg.tsv", kSmallGraph), path("data"));
  TrainConfig cfg;
  cfg.rank = 2;
  cfg.max_sweeps = 1;
  cfg.init = InitMode::random;
  pipeline::cmd_train(path("data"), path("model"), cfg);
  pipeline::cmd_export(path("model"), path("all.csv"));
  const auto lines = io::read_lines(path("all.csv"));
  ASSERT_EQ(lines.size(), 1u + 8u);
  EXPECT_EQ(lines[0], "type,entity_raw_id,f0,f1");
}

TEST_F(Workspace, MockSchemaWritesOneFilePerFactor) {
  pipeline::cmd_synth(pipeline::SynthKind::drkg_mock, path("raw"), 1, 1000);
  pipeline::IngestOptions opts;
  opts.type_order = io::read_lines(path("raw") / "types.txt");
  pipeline::cmd_ingest(path("raw") / "triplets.tsv", path("data"), opts);
  TrainConfig cfg;
  cfg.rank = 2;
  cfg.max_sweeps = 0;
  cfg.init = InitMode::random;
  pipeline::cmd_train(path("data"), path("model"), cfg);
  std::size_t entity_files = 0, relation_files = 0;
  for (const auto& e : fs::directory_iterator(path("model"))) {
    const auto name = e.path().filename().string();
    if (name.rfind("entity_", 0) == 0) ++entity_files;
    if (name.rfind("relation_", 0) == 0) ++relation_files;
  }
  EXPECT_EQ(entity_files, 13u);
  EXPECT_EQ(relation_files, 17u);
}

#ifdef TEXGRAPH_CLI_PATH

namespace {

struct CliResult {
  int code;
  std::string out;
};

CliResult cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TEXGRAPH_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

}  // namespace

TEST_F(Workspace, CliMissingInputExitsTwo) {
  const auto r = cli("ingest " + path("absent.tsv").string() + " " + path("out").string(), path("log"));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("absent.tsv"), std::string::npos) << r.out;
}

TEST_F(Workspace, CliBadOptionExitsTwo) {
  EXPECT_EQ(cli("train a b --rank 0", path("log")).code, 2);
  EXPECT_EQ(cli("no-such-command", path("log")).code, 2);
}

TEST_F(Workspace, CliHelpListsDefaults) {
  const auto r = cli("train --help", path("log"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--rank"), std::string::npos);
  EXPECT_NE(r.out.find("[50]"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("--ridge"), std::string::npos);
}

TEST_F(Workspace, CliPlantedEndToEnd) {
  const auto raw = path("raw").string(), data = path("data").string(), model = path("model").string();
  ASSERT_EQ(cli("synth " + raw + " --kind planted --seed 4", path("log")).code, 0);
  ASSERT_EQ(cli("ingest " + raw + "/triplets.tsv " + data + " --type-order " + raw + "/types.txt", path("log")).code, 0);
  const auto train = cli("train " + data + " " + model + " --rank 8 --sweeps 10 --init spectral", path("log"));
  ASSERT_EQ(train.code, 0) << train.out;
  EXPECT_NE(train.out.find("sweep 10 loss"), std::string::npos) << train.out;
  const auto eval = cli("evaluate " + model + " " + raw + "/evalspec.json " + path("eval").string(), path("log"));
  ASSERT_EQ(eval.code, 0) << eval.out;
  ASSERT_EQ(cli("export " + model + " " + path("all.csv").string(), path("log")).code, 0);

  const auto summary = io::read_json(path("eval") / pipeline::kSummaryFile);
  EXPECT_TRUE(summary.contains("hits"));
  const auto ranking = io::read_lines(path("eval") / pipeline::kReportFile);
  EXPECT_EQ(ranking.size(), 11u);
  // The planted structure puts held-out compounds of the target community on top.
  std::size_t hits = 0;
  for (std::size_t i = 1; i < ranking.size(); ++i) hits += ranking[i].substr(ranking[i].rfind('\t') + 1) == "1";
  EXPECT_GE(hits, 3u);
  for (const char* f : {"run.json"}) {
    EXPECT_TRUE(fs::exists(path("data") / f));
    EXPECT_TRUE(fs::exists(path("model") / f));
    EXPECT_TRUE(fs::exists(path("eval") / f));
  }
}

#endif
