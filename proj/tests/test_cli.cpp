#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spanrl/cli.hpp"
#include "spanrl/corpus.hpp"
#include "spanrl/policy_opt.hpp"
#include "spanrl/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spanrl;

namespace {

const fs::path kData = SPANRL_TEST_DATA;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "spanrl");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("spanrl_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

json load_json(const std::string& path) { return json::parse(slurp(path)); }

std::vector<json> load_jsonl(const std::string& path) {
  std::vector<json> rows;
  std::istringstream in(slurp(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

const std::string kGold = (kData / "e2e_gold.jsonl").string();
const std::string kRaw = (kData / "e2e_raw.jsonl").string();
const std::string kMulti = (kData / "f1k_raw.jsonl").string();

// Pooled character counts worked out by hand for the e2e fixture.
constexpr std::int64_t kOverlap = 24;
constexpr std::int64_t kPredChars = 41;
constexpr std::int64_t kGoldChars = 32;

}  // namespace

TEST_CASE("parse then score reproduces hand-computed pooled counts") {
  TempDir dir;
  const Run parsed = run({"parse", "--raw", kRaw, "--gold", kGold, "--out", dir / "norm.jsonl",
                          "--report", dir / "parse.json"});
  REQUIRE(parsed.code == 0);

  const json report = load_json(dir / "parse.json");
  CHECK(report["command"] == "parse");
  CHECK(report["results"]["records"] == 5);
  CHECK(report["diagnostics"]["parse_failures"] == 1);
  CHECK(report["diagnostics"]["unmatched_segments"] == 1);

  const auto rows = load_jsonl(dir / "norm.jsonl");
  REQUIRE(rows.size() == 5);
  // Leftmost occurrence of the repeated phrase.
  CHECK(rows[1]["spans"][0]["start"] == 0);
  CHECK(rows[1]["spans"][0]["end"] == 10);
  CHECK(rows[2]["unmatched"] == json::array({"open 24 hours"}));
  CHECK(rows[3]["parse_ok"] == false);
  CHECK(rows[3]["spans"].empty());
  CHECK(rows[4]["parse_ok"] == true);

  const Run scored =
      run({"score", "--gold", kGold, "--pred", dir / "norm.jsonl", "--out", dir / "score.json"});
  REQUIRE(scored.code == 0);
  const json overall = load_json(dir / "score.json")["results"]["overall"];
  CHECK(overall["overlap_chars"] == kOverlap);
  CHECK(overall["pred_chars"] == kPredChars);
  CHECK(overall["gold_chars"] == kGoldChars);
  CHECK(overall["precision"].get<double>() == static_cast<double>(kOverlap) / kPredChars);
  CHECK(overall["recall"].get<double>() == static_cast<double>(kOverlap) / kGoldChars);
  const double p = static_cast<double>(kOverlap) / kPredChars;
  const double r = static_cast<double>(kOverlap) / kGoldChars;
  CHECK(overall["f1"].get<double>() == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
  CHECK(scored.out.find("Overall") != std::string::npos);
}

TEST_CASE("score variants") {
  TempDir dir;
  SUBCASE("gold against itself is perfect") {
    std::string pred;
    for (const GoldRecord& g : read_gold(fs::path(kGold))) {
      json row{{"id", g.id}, {"spans", json::array()}, {"segments", json::array()},
               {"unmatched", json::array()}, {"parse_ok", true}};
      for (const Span& s : g.gold_spans.intervals()) {
        row["spans"].push_back({{"start", s.start}, {"end", s.half_open_end()}});
      }
      pred += row.dump() + "\n";
    }
    spit(dir / "pred.jsonl", pred);
    const Run r = run({"score", "--gold", kGold, "--pred", dir / "pred.jsonl", "--by-task"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Overall        100.0 100.0 100.0") != std::string::npos);
    CHECK(r.out.find("QA") != std::string::npos);
  }
  SUBCASE("all clean, all empty") {
    spit(dir / "gold.jsonl",
         R"({"id":"a","task":"qa","context":"c","response":"fine","spans":[]})" "\n"
         R"({"id":"b","task":"qa","context":"c","response":"also fine","spans":[]})" "\n");
    spit(dir / "pred.jsonl",
         R"({"id":"a","segments":[],"spans":[],"unmatched":[],"parse_ok":true})" "\n");
    const Run r = run({"score", "--gold", dir / "gold.jsonl", "--pred", dir / "pred.jsonl",
                       "--out", dir / "s.json"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("scored as empty") != std::string::npos);
    const json o = load_json(dir / "s.json")["results"]["overall"];
    CHECK(o["precision"] == 1.0);
    CHECK(o["recall"] == 1.0);
    CHECK(o["f1"] == 1.0);
  }
  SUBCASE("macro on one example equals the per-example score") {
    spit(dir / "gold.jsonl",
         R"({"id":"a","task":"qa","context":"c","response":"0123456789","spans":[{"start":2,"end":8}]})" "\n");
    spit(dir / "pred.jsonl",
         R"({"id":"a","segments":[],"spans":[{"start":0,"end":4}],"unmatched":[],"parse_ok":true})" "\n");
    const Run r = run({"score", "--gold", dir / "gold.jsonl", "--pred", dir / "pred.jsonl",
                       "--macro", "--out", dir / "s.json"});
    REQUIRE(r.code == 0);
    const Prf expected = prf_example(normalize({Span{0, 3}}), normalize({Span{2, 7}}));
    const json o = load_json(dir / "s.json")["results"]["overall"];
    CHECK(o["precision"].get<double>() == expected.precision);
    CHECK(o["recall"].get<double>() == expected.recall);
    CHECK(o["f1"].get<double>() == expected.f1);
  }
  SUBCASE("spans past the response are rejected") {
    spit(dir / "gold.jsonl",
         R"({"id":"a","task":"qa","context":"c","response":"short","spans":[]})" "\n");
    spit(dir / "pred.jsonl",
         R"({"id":"a","segments":[],"spans":[{"start":3,"end":9}],"unmatched":[],"parse_ok":true})" "\n");
    const Run r = run({"score", "--gold", dir / "gold.jsonl", "--pred", dir / "pred.jsonl"});
    CHECK(r.code == 1);
    CHECK(r.err.find("\"a\"") != std::string::npos);
  }
  SUBCASE("duplicate prediction ids are rejected") {
    const Run p = run({"parse", "--raw", kMulti, "--gold", kGold, "--out", dir / "n.jsonl"});
    REQUIRE(p.code == 0);
    const Run r = run({"score", "--gold", kGold, "--pred", dir / "n.jsonl"});
    CHECK(r.code == 1);
  }
}

TEST_CASE("f1k") {
  TempDir dir;
  const Run r = run({"f1k", "--gold", kGold, "--raw", kMulti, "--k", "1,2,3,4", "--out",
                     dir / "curve.csv", "--report", dir / "f1k.json"});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "curve.csv").rfind("k,task,f1\n", 0) == 0);

  std::vector<double> all;
  const json report = load_json(dir / "f1k.json");
  for (const json& row : report["results"]) {
    if (row["task"] == "all") all.push_back(row["f1"].get<double>());
  }
  REQUIRE(all.size() == 4);
  // Hand-computed best-of-K means over the five examples.
  CHECK(all[0] == doctest::Approx((1.0 + 20.0 / 27.0) / 5.0).epsilon(1e-12));
  CHECK(all[1] == doctest::Approx((3.0 + 20.0 / 27.0 + 10.0 / 13.0) / 5.0).epsilon(1e-12));
  CHECK(all[2] == 1.0);
  CHECK(all[3] == 1.0);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i] >= all[i - 1]);

  SUBCASE("K=1 equals macro scoring of the first sample") {
    std::string first;
    std::istringstream in(slurp(kMulti));
    for (std::string line; std::getline(in, line);) {
      json row = json::parse(line);
      if (row["sample_index"] != 0) continue;
      row.erase("sample_index");
      first += row.dump() + "\n";
    }
    spit(dir / "first.jsonl", first);
    REQUIRE(run({"parse", "--raw", dir / "first.jsonl", "--gold", kGold, "--out",
                 dir / "first_norm.jsonl"})
                .code == 0);
    REQUIRE(run({"score", "--gold", kGold, "--pred", dir / "first_norm.jsonl", "--macro", "--out",
                 dir / "macro.json"})
                .code == 0);
    CHECK(load_json(dir / "macro.json")["results"]["overall"]["f1"].get<double>() == all[0]);
  }
  SUBCASE("too few samples") {
    const Run bad = run({"f1k", "--gold", kGold, "--raw", kMulti, "--k", "5"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("\"e") != std::string::npos);
  }
}

TEST_CASE("reward") {
  TempDir dir;
  REQUIRE(run({"parse", "--raw", kRaw, "--gold", kGold, "--out", dir / "norm.jsonl"}).code == 0);
  REQUIRE(run({"reward", "--gold", kGold, "--pred", dir / "norm.jsonl", "--out",
               dir / "rewards.jsonl"})
              .code == 0);
  const auto rows = load_jsonl(dir / "rewards.jsonl");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0]["prompt_id"] == "e1");
  CHECK(rows[0]["rewards"][0] == 1.0);
  CHECK(rows[1]["rewards"][0].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rows[3]["rewards"][0] == 0.0);
  CHECK(rows[4]["rewards"][0] == 1.0);
  CHECK(rows[4]["gold_empty"][0] == true);
  CHECK(rows[4]["pred_empty"][0] == true);

  REQUIRE(run({"reward", "--gold", kGold, "--pred", dir / "norm.jsonl", "--gamma", "0.5", "--out",
               dir / "gamma.jsonl"})
              .code == 0);
  CHECK(load_jsonl(dir / "gamma.jsonl")[4]["rewards"][0] == 0.5);

  SUBCASE("multi-sample groups keep sample order") {
    REQUIRE(run({"parse", "--raw", kMulti, "--gold", kGold, "--out", dir / "multi.jsonl"}).code ==
            0);
    const Run r = run({"reward", "--gold", kGold, "--pred", dir / "multi.jsonl"});
    REQUIRE(r.code == 0);
    const json e5 = json::parse(r.out.substr(r.out.rfind("{\"prompt_id\":\"e5\"")));
    CHECK(e5["rewards"] == json::array({0.0, 1.0, 0.0, 1.0}));
  }
}

TEST_CASE("advantages") {
  TempDir dir;
  spit(dir / "rewards.jsonl",
       R"({"prompt_id":"p","rewards":[1,0,0,0],"gold_empty":[true,true,true,true],"pred_empty":[true,false,false,false]})" "\n"
       R"({"prompt_id":"q","rewards":[0.5,0.5,0.5,0.5],"gold_empty":[false,false,false,false],"pred_empty":[false,false,false,false]})" "\n");
  AlgoConfig cfg;
  cfg.group_size = 4;
  const std::vector<double> expected =
      grpo_advantages(make_reward_group({1, 0, 0, 0}, {true, true, true, true},
                                        {true, false, false, false}, ClassMode::by_gold),
                      cfg)
          .advantages;

  SUBCASE("grpo") {
    const Run r = run({"advantages", "--rewards", dir / "rewards.jsonl", "--out", dir / "adv.jsonl",
                       "--group-size", "4", "--report", dir / "adv.json"});
    REQUIRE(r.code == 0);
    const auto rows = load_jsonl(dir / "adv.jsonl");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["advantages"].get<std::vector<double>>() == expected);
    CHECK(rows[1]["advantages"] == json::array({0.0, 0.0, 0.0, 0.0}));
    CHECK(rows[0]["algo"] == "grpo");
    const json audit = load_json(dir / "adv.json")["results"]["audit"];
    CHECK(audit["count_empty"] == 1);
    CHECK(audit["count_nonempty"] == 7);
    CHECK(audit["mean_adv_empty"].get<double>() == expected[0]);
    CHECK(r.out.find("empty prediction") != std::string::npos);
  }
  SUBCASE("capo scales the clean class") {
    const Run r = run({"advantages", "--rewards", dir / "rewards.jsonl", "--out", dir / "adv.jsonl",
                       "--group-size", "4", "--algo", "capo", "--alpha", "0.25"});
    REQUIRE(r.code == 0);
    const auto adv = load_jsonl(dir / "adv.jsonl")[0]["advantages"].get<std::vector<double>>();
    for (std::size_t i = 0; i < 4; ++i) CHECK(adv[i] == 0.25 * expected[i]);
  }
  SUBCASE("ragged group") {
    spit(dir / "ragged.jsonl",
         R"({"prompt_id":"bad","rewards":[1,0,0],"gold_empty":[true,true,true],"pred_empty":[true,false,false]})" "\n");
    const Run r = run({"advantages", "--rewards", dir / "ragged.jsonl", "--out", dir / "adv.jsonl",
                       "--group-size", "4"});
    CHECK(r.code == 1);
    CHECK(r.err.find("\"bad\"") != std::string::npos);
  }
}

TEST_CASE("simulate") {
  TempDir dir;
  const std::vector<std::string> base{"simulate", "--steps", "100", "--algo", "capo"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  REQUIRE(with({"--seed", "7", "--out", dir / "a"}).code == 0);
  REQUIRE(with({"--seed", "7", "--out", dir / "b"}).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(slurp(dir / "a.csv").rfind("step,precision,recall,f1,", 0) == 0);
  CHECK(load_json(dir / "a.json")["config"]["train"]["seed"] == 7);

  SUBCASE("seed from the environment") {
    ::setenv("SPANRL_SEED", "7", 1);
    const Run r = with({"--out", dir / "c"});
    ::unsetenv("SPANRL_SEED");
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "c.csv") == slurp(dir / "a.csv"));
  }
  SUBCASE("bad environment seed") {
    ::setenv("SPANRL_SEED", "seven", 1);
    const Run r = with({"--out", dir / "d"});
    ::unsetenv("SPANRL_SEED");
    CHECK(r.code == 1);
  }
  SUBCASE("bad parameters") {
    CHECK(with({"--out", dir / "e", "--alpha", "-0.5"}).code == 1);
    CHECK(with({"--out", dir / "e", "--offsets", "5,10"}).code == 1);
    CHECK(with({"--out", dir / "e", "--steps", "0"}).code == 1);
  }
  SUBCASE("divergence") {
    const Run r = with({"--out", dir / "f", "--lr", "1.7e308"});
    CHECK(r.code == 2);
    CHECK(r.err.find("non-finite") != std::string::npos);
  }
}

TEST_CASE("stats and general exit codes") {
  TempDir dir;
  const Run s = run({"stats", "--gold", kGold, "--out", dir / "stats.json"});
  REQUIRE(s.code == 0);
  CHECK(load_json(dir / "stats.json")["command"] == "stats");

  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"score", "--gold", dir / "missing.jsonl", "--pred", dir / "missing.jsonl"}).code == 1);
  spit(dir / "broken.jsonl", "{\"id\": \n");
  CHECK(run({"stats", "--gold", dir / "broken.jsonl"}).code == 1);
}
