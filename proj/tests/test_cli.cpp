#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "lowres/cli.hpp"
#include "support/records.hpp"
#include "support/synthetic.hpp"

namespace lowres::cli {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;

  json summary() const {
    std::stringstream ss(out);
    std::string line, last;
    while (std::getline(ss, line)) {
      if (!line.empty()) last = line;
    }
    return json::parse(last);
  }
};

Outcome cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

// Runs the installed binary through the shell; stdout and stderr are captured.
Outcome binary(const std::string& args, const fs::path& scratch) {
  const auto out = scratch / "stdout.txt";
  const auto err = scratch / "stderr.txt";
  const std::string cmd = std::string(LOWRES_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, jsonl::read_file(out), jsonl::read_file(err)};
}

void write_docs(const fs::path& p, const std::vector<std::string>& texts, const std::string& source = "real") {
  std::string lines;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    lines += jsonl::dump(json{{"id", "d" + std::to_string(i)}, {"source", source}, {"text", texts[i]}}) + "\n";
  }
  jsonl::write_file(p, lines);
}

void write_ethiopic(const fs::path& p, std::uint64_t seed, std::size_t docs, std::size_t bytes) {
  testing::EthiopicTextGenerator gen(seed, 300);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < docs; ++i) texts.push_back(gen.text(bytes));
  write_docs(p, texts);
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    ::setenv(name, value.c_str(), 1);
  }
  ~ScopedEnv() {
    if (old_) {
      ::setenv(name_, old_->c_str(), 1);
    } else {
      ::unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, BinaryUnknownSubcommandExitsTwoWithUsage) {
  TempDir dir;
  const auto r = binary("frobnicate", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(Cli, BinaryHelpExitsZero) {
  TempDir dir;
  const auto r = binary("--help", dir.path());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("tokenizer"), std::string::npos);
  EXPECT_NE(r.out.find("bench"), std::string::npos);
}

TEST(Cli, MissingRequiredFlagIsUsageError) {
  EXPECT_EQ(cli({"tokenizer", "merge", "--base", "builtin:byte-fallback"}).code, kExitUsage);
}

TEST(Cli, TrainMergeEncodeDecodeRoundtrip) {
  TempDir dir;
  write_ethiopic(dir.path() / "am.jsonl", 1, 40, 2000);
  const auto ext = dir.path() / "ext.json";
  const auto model = dir.path() / "model.json";
  auto r = cli({"tokenizer", "train", "--corpus", (dir.path() / "am.jsonl").string(), "--out", ext.string(),
                "--target-size", "300"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pieces = r.summary()["pieces"].get<std::size_t>();
  EXPECT_GT(pieces, 0u);
  EXPECT_LE(pieces, 300u);

  r = cli({"tokenizer", "merge", "--base", "builtin:byte-fallback", "--ext", ext.string(), "--out", model.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = r.summary();
  EXPECT_EQ(s["size"].get<std::size_t>(), s["base_size"].get<std::size_t>() + pieces);
  EXPECT_EQ(s["dropped_collisions"], 0);
  EXPECT_EQ(s["command"], "tokenizer merge");
  EXPECT_EQ(s["status"], "ok");

  const std::string text = "ሰላም፣ እንዴት ነህ? hello";
  r = cli({"tokenizer", "encode", "--model", model.string(), "--text", text});
  ASSERT_EQ(r.code, 0) << r.err;
  std::stringstream ss(r.out);
  std::string ids_line;
  std::getline(ss, ids_line);
  const auto ids = json::parse(ids_line).get<std::vector<std::uint32_t>>();
  std::string csv;
  for (const auto id : ids) csv += (csv.empty() ? "" : ",") + std::to_string(id);
  r = cli({"tokenizer", "decode", "--model", model.string(), "--ids", csv});
  ASSERT_EQ(r.code, 0) << r.err;
  std::stringstream ds(r.out);
  std::string decoded;
  std::getline(ds, decoded);
  EXPECT_EQ(json::parse(decoded).get<std::string>(), text);

  r = cli({"tokenizer", "stats", "--model", model.string(), "--corpus", (dir.path() / "am.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.summary().contains("compression"));
}

TEST(Cli, ByteFallbackEncodesPerByte) {
  const auto r = cli({"tokenizer", "encode", "--model", "builtin:byte-fallback", "--text", "ሰ"});
  ASSERT_EQ(r.code, 0) << r.err;
  // ▁ then the three UTF-8 bytes of U+1230.
  EXPECT_TRUE(r.out.starts_with("[259,228,139,179]\n")) << r.out;
}

TEST(Cli, CorpusIngestStatsDedup) {
  TempDir dir;
  write_docs(dir.path() / "in.jsonl", {"ሰላም ዓለም።", "ሰላም ዓለም።", "hello world"});
  auto r = cli({"corpus", "dedup", "--input", (dir.path() / "in.jsonl").string(), "--out",
                (dir.path() / "dd.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["kept"], 2);
  r = cli({"corpus", "stats", "--input", (dir.path() / "dd.jsonl").string(), "--model", "builtin:byte-fallback"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["documents"], 2);
  r = cli({"corpus", "ingest", "--input", (dir.path() / "in.jsonl").string(), "--out",
           (dir.path() / "ing.jsonl").string(), "--nfc"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["documents"], 3);
}

TEST(Cli, MalformedCorpusIsRuntimeErrorNamingLine) {
  TempDir dir;
  jsonl::write_file(dir.path() / "bad.jsonl", "{\"id\":\"a\",\"source\":\"real\",\"text\":\"x\"}\n{\"id\":\"b\"}\n");
  const auto r = cli({"corpus", "stats", "--input", (dir.path() / "bad.jsonl").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST(Cli, TranslateCorpusWithTaggingMock) {
  TempDir dir;
  write_docs(dir.path() / "en.jsonl", {"One fish. Two fish.", "Red fish, blue fish!"}, "other:wiki");
  const auto out = dir.path() / "am.jsonl";
  const auto report = dir.path() / "report.json";
  const auto r = cli({"translate", "corpus", "--input", (dir.path() / "en.jsonl").string(), "--out", out.string(),
                      "--backend", "mock:tag", "--report", report.string(), "--source-tag", "translated_wikipedia",
                      "--retry-base-ms", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto docs = corpus::ingest_documents(out, corpus::Format::kJsonl);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].source, SourceTag::translated_wikipedia());
  EXPECT_NE(docs[0].text.find(translate::kTag), std::string::npos);
  const auto rep = json::parse(jsonl::read_file(report));
  EXPECT_TRUE(rep["gaps"].empty());
  EXPECT_EQ(rep["config"]["backend"], "mock:tag");
}

TEST(Cli, DryRunWritesNothingAndCallsNoBackend) {
  TempDir dir;
  write_docs(dir.path() / "en.jsonl", {"One fish. Two fish.", "Red fish, blue fish!"});
  const auto out = dir.path() / "am.jsonl";
  // Nothing listens on port 1: any backend call would fail the run.
  const auto r = cli({"--dry-run", "translate", "corpus", "--input", (dir.path() / "en.jsonl").string(), "--out",
                      out.string(), "--backend", "http://127.0.0.1:1", "--max-retries", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(out));
  const auto s = r.summary();
  EXPECT_EQ(s["dry_run"], true);
  EXPECT_EQ(s["outputs"], json::array({out.string()}));
  EXPECT_GT(s["plan"]["chunks"].get<std::size_t>(), 0u);

  write_ethiopic(dir.path() / "am.jsonl", 2, 5, 500);
  const auto mix = dir.path() / "mix.jsonl";
  const auto man = dir.path() / "man.json";
  const auto m = cli({"--dry-run", "dataset", "mixture", "--source",
                      "real=" + (dir.path() / "am.jsonl").string() + ":1", "--budget", "100", "--out", mix.string(),
                      "--manifest", man.string()});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_FALSE(fs::exists(mix));
  EXPECT_FALSE(fs::exists(man));
}

TEST(Cli, BackendEnvironmentOverridesFlag) {
  TempDir dir;
  write_docs(dir.path() / "en.jsonl", {"Hello there."});
  const auto out = dir.path() / "out.jsonl";
  ScopedEnv env(kBackendEnv, "mock:tag");
  const auto r = cli({"translate", "corpus", "--input", (dir.path() / "en.jsonl").string(), "--out", out.string(),
                      "--backend", "mock:identity"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(jsonl::read_file(out).find(translate::kTag), std::string::npos);
}

TEST(Cli, UnreachableBackendSkipsSentencesAndReportsGaps) {
  TempDir dir;
  write_docs(dir.path() / "en.jsonl", {"Hello there."});
  const auto out = dir.path() / "out.jsonl";
  const auto report = dir.path() / "report.json";
  const auto r = cli({"translate", "corpus", "--input", (dir.path() / "en.jsonl").string(), "--out", out.string(),
                      "--backend", "mock:flaky:100", "--max-retries", "1", "--retry-base-ms", "0", "--report",
                      report.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["failed_batches"], 1);
  EXPECT_FALSE(json::parse(jsonl::read_file(report))["gaps"].empty());
}

TEST(Cli, ConfigUnknownFieldNamesField) {
  TempDir dir;
  const auto cfg = dir.path() / "cfg.json";
  jsonl::write_file(cfg, R"({"backend":"mock:tag","max_chunk_tokenz":12})");
  const auto r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("max_chunk_tokenz"), std::string::npos) << r.err;
}

TEST(Cli, ConfigBadValueNamesField) {
  TempDir dir;
  const auto cfg = dir.path() / "cfg.json";
  jsonl::write_file(cfg, R"({"parallelism":0})");
  auto r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("parallelism"), std::string::npos) << r.err;

  jsonl::write_file(cfg, R"({"mixture":{"sources":[{"tag":"real","path":"/nonexistent/x.jsonl","weight":1}]}})");
  r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("mixture.sources[0].path"), std::string::npos) << r.err;

  jsonl::write_file(cfg, R"({"templates":{"prompt":"{question} only"}})");
  r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("templates.prompt"), std::string::npos) << r.err;

  jsonl::write_file(cfg, R"({"max_retries":"three"})");
  r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("max_retries"), std::string::npos) << r.err;

  jsonl::write_file(cfg, "{not json");
  r = cli({"--config", cfg.string(), "tokenizer", "stats"});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST(Cli, ConfigRoundtripsThroughJson) {
  PipelineConfig c;
  c.backend = "mock:tag";
  c.bucket_bounds = {8, 16};
  c.mixture_sources = {{"real", "/tmp/a.jsonl", 0.5}};
  c.total_token_budget = 42;
  c.labels = "WXYZ";
  const auto back = PipelineConfig::from_json(json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Cli, MixtureManifestEchoesConfigAndIsReproducible) {
  TempDir dir;
  write_ethiopic(dir.path() / "real.jsonl", 3, 30, 400);
  write_ethiopic(dir.path() / "wiki.jsonl", 4, 30, 400);
  const auto cfg = dir.path() / "cfg.json";
  PipelineConfig c;
  c.seed = 42;
  c.total_token_budget = 6000;
  c.mixture_sources = {{"real", (dir.path() / "real.jsonl").string(), 0.6},
                       {"translated_wikipedia", (dir.path() / "wiki.jsonl").string(), 0.4}};
  jsonl::write_file(cfg, c.to_json().dump());
  auto run_once = [&](const std::string& tag) {
    const auto out = dir.path() / ("mix" + tag + ".jsonl");
    const auto man = dir.path() / ("man" + tag + ".json");
    const auto r = cli({"--config", cfg.string(), "dataset", "mixture", "--out", out.string(), "--manifest", man.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return std::pair{jsonl::read_file(out), jsonl::read_file(man)};
  };
  const auto a = run_once("a");
  const auto b = run_once("b");
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  const auto manifest = json::parse(a.second);
  EXPECT_EQ(manifest["config"], c.to_json());

  // A different seed changes the selection.
  const auto out = dir.path() / "mixc.jsonl";
  const auto r = cli({"--config", cfg.string(), "--seed", "7", "dataset", "mixture", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(jsonl::read_file(out), a.first);
}

TEST(Cli, TranslationRerunIsByteIdentical) {
  TempDir dir;
  std::mt19937_64 rng(8);
  std::vector<std::string> texts;
  for (int i = 0; i < 30; ++i) texts.push_back(testing::english_sentence(rng) + " " + testing::english_sentence(rng));
  write_docs(dir.path() / "en.jsonl", texts);
  std::string first;
  for (int k = 0; k < 2; ++k) {
    const auto out = dir.path() / ("o" + std::to_string(k) + ".jsonl");
    const auto r = cli({"translate", "corpus", "--input", (dir.path() / "en.jsonl").string(), "--out", out.string(),
                        "--backend", "mock:tag", "--parallelism", "4", "--max-batch-items", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    if (k == 0) {
      first = jsonl::read_file(out);
    } else {
      EXPECT_EQ(jsonl::read_file(out), first);
    }
  }
}

TEST(Cli, SftAndOaAndVisualCommands) {
  TempDir dir;
  const auto en = dir.path() / "en.jsonl";
  const auto am = dir.path() / "am.jsonl";
  const datasets::InstructionPair pair{"p1", "Name a color.", std::nullopt, "Red.", "eng", "eng",
                                      datasets::Origin(datasets::Origin::Kind::kAlpaca)};
  jsonl::write_file(en, jsonl::dump(datasets::pair_to_json(pair)) + "\n");
  auto r = cli({"dataset", "sft-translate", "--input", en.string(), "--out", am.string(), "--backend", "mock:tag"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["translated"], 1);
  r = cli({"dataset", "sft-mixed", "--source", en.string(), "--target", am.string(), "--out",
           (dir.path() / "mixed.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["pairs"], 2);
  r = cli({"dataset", "sft-transtask", "--source", en.string(), "--target", am.string(), "--out",
           (dir.path() / "tt.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["pairs"], 4);

  std::mt19937_64 rng(4);
  std::string trees;
  std::uint64_t next_id = 0;
  for (int i = 0; i < 5; ++i) trees += jsonl::dump(datasets::tree_to_json(testing::random_tree(rng, 4, next_id))) + "\n";
  jsonl::write_file(dir.path() / "trees.jsonl", trees);
  r = cli({"dataset", "oa-prune", "--input", (dir.path() / "trees.jsonl").string(), "--out",
           (dir.path() / "threads.jsonl").string(), "--as-pairs"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["trees"], 5);

  std::string visual;
  for (int i = 0; i < 5; ++i) visual += jsonl::dump(datasets::visual_to_json(testing::random_visual_record(rng, i))) + "\n";
  jsonl::write_file(dir.path() / "vis.jsonl", visual);
  r = cli({"dataset", "visual-translate", "--input", (dir.path() / "vis.jsonl").string(), "--out",
           (dir.path() / "vis_am.jsonl").string(), "--backend", "mock:tag"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["translated"], 5);
}

std::string item_lines(std::size_t n, std::mt19937_64& rng) {
  std::string lines;
  for (std::size_t i = 0; i < n; ++i) {
    lines += jsonl::dump(bench::item_to_json(testing::random_item(rng, bench::mmlu_subjects()[i % 57]))) + "\n";
  }
  return lines;
}

TEST(Cli, BenchScoreCountMismatchExitsOne) {
  TempDir dir;
  std::mt19937_64 rng(1);
  jsonl::write_file(dir.path() / "items.jsonl", item_lines(4, rng));
  jsonl::write_file(dir.path() / "resp.jsonl", R"({"item_id":0,"response":"A"})"
                                               "\n"
                                               R"({"item_id":1,"response":"B"})"
                                               "\n");
  const auto r = cli({"bench", "score", "--items", (dir.path() / "items.jsonl").string(), "--responses",
                      (dir.path() / "resp.jsonl").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("4 items"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("2 responses"), std::string::npos) << r.err;
  const auto b = binary("bench score --items " + (dir.path() / "items.jsonl").string() + " --responses " +
                            (dir.path() / "resp.jsonl").string(),
                        dir.path());
  EXPECT_EQ(b.code, 1);
}

TEST(Cli, BenchBuildScoreReport) {
  TempDir dir;
  std::mt19937_64 rng(2);
  const auto items_en = dir.path() / "items.jsonl";
  const auto items_am = dir.path() / "items_am.jsonl";
  jsonl::write_file(items_en, item_lines(57 * 2, rng));
  auto r = cli({"bench", "build", "--items", items_en.string(), "--out", items_am.string(), "--backend", "mock:tag"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.summary()["translated"], 114);
  const auto items = bench::read_items(items_am);
  std::string resp;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const char letter = "ABCD"[i % 2 == 0 ? items[i].answer : (items[i].answer + 1) % 4];
    resp += jsonl::dump(json{{"item_id", i}, {"response", std::string("መልሱ ") + letter + " ነው"}}) + "\n";
  }
  jsonl::write_file(dir.path() / "resp.jsonl", resp);
  const auto rep = dir.path() / "rep.json";
  r = cli({"bench", "score", "--items", items_am.string(), "--responses", (dir.path() / "resp.jsonl").string(), "--out",
           rep.string(), "--csv", (dir.path() / "rep.csv").string(), "--label", "pretrain=3784m", "--label",
           "finetune=Full Text"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(r.summary()["overall_micro"].get<double>(), 0.5);
  const auto rj = json::parse(jsonl::read_file(rep));
  EXPECT_TRUE(rj.contains("config"));
  EXPECT_EQ(rj["labels"]["pretrain"], "3784m");
  const auto csv = jsonl::read_file(dir.path() / "rep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 58);

  r = cli({"bench", "report", "--reports", rep.string(), rep.string(), "--csv", (dir.path() / "cmp.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| 3784m "), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("| 0.50 "), std::string::npos) << r.out;
}

}  // namespace
}  // namespace lowres::cli
