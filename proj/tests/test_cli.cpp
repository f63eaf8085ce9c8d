#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() /
          ("kpiscan_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

struct Run {
  int code;
  std::string out;
};

Run kpiscan(const Workdir& w, const std::string& args) {
  const std::string log = w / "stdout.txt";
  const std::string cmd =
      std::string("\"") + KPISCAN_CLI_PATH + "\" " + args + " >\"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::size_t lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// Small corpus plus a one-epoch cnn checkpoint at L=32.
void small_model(const Workdir& w) {
  REQUIRE(kpiscan(w, "gen --per-class 6 --len 32 --seed 3 --out " + w / "d.jsonl").code == 0);
  REQUIRE(kpiscan(w, "train --data " + w / "d.jsonl" + " --arch cnn --epochs 1 --out " +
                         w / "m.json" + " --history " + w / "h.csv")
              .code == 0);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 2") {
  Workdir w;
  CHECK(kpiscan(w, "").code == 2);
  CHECK(kpiscan(w, "bogus").code == 2);
  CHECK(kpiscan(w, "gen").code == 2);
  CHECK(kpiscan(w, "train --data x --arch gru --out y").code == 2);
  CHECK(kpiscan(w, "--help").code == 0);
}

TEST_CASE("gen is deterministic and prints class counts") {
  Workdir w;
  const Run a = kpiscan(w, "gen --per-class 3 --len 24 --seed 5 --out " + w / "a.jsonl");
  REQUIRE(a.code == 0);
  CHECK(a.out.find("Normal: 3") != std::string::npos);
  REQUIRE(kpiscan(w, "gen --per-class 3 --len 24 --seed 5 --out " + w / "b.jsonl").code == 0);
  REQUIRE(kpiscan(w, "gen --per-class 3 --len 24 --seed 6 --out " + w / "c.jsonl").code == 0);
  CHECK(lines(slurp(w / "a.jsonl")) == 24);
  CHECK(slurp(w / "a.jsonl") == slurp(w / "b.jsonl"));
  CHECK(slurp(w / "a.jsonl") != slurp(w / "c.jsonl"));

  write(w / "cfg.txt", "corpus.per_class = 2\ngen.noise_sigma = 0\n");
  REQUIRE(kpiscan(w, "gen --len 24 --config " + w / "cfg.txt" + " --out " + w / "d.jsonl").code == 0);
  CHECK(lines(slurp(w / "d.jsonl")) == 16);
  write(w / "bad.txt", "gen.colour = red\n");
  CHECK(kpiscan(w, "gen --config " + w / "bad.txt" + " --out " + w / "e.jsonl").code == 2);
}

TEST_CASE("train writes checkpoint and one history row per epoch") {
  Workdir w;
  small_model(w);
  const std::string h = slurp(w / "h.csv");
  CHECK(h.starts_with("epoch,train_loss,train_acc,test_loss,test_acc\n1,"));
  CHECK(lines(h) == 2);
  CHECK(slurp(w / "m.json").starts_with("{\"format_version\":1,"));

  CHECK(kpiscan(w, "train --data " + w / "missing.jsonl" + " --out " + w / "x.json").code == 3);
  write(w / "bad.jsonl", "{\"source_id\":\"a\",\"label\":1,\"features\":[0.5,2]}\n");
  const Run bad = kpiscan(w, "train --data " + w / "bad.jsonl" + " --out " + w / "x.json");
  CHECK(bad.code == 4);
  CHECK(bad.out.find("line 1") != std::string::npos);
  write(w / "cfg.txt", "model.input_length = 64\n");
  CHECK(kpiscan(w, "train --data " + w / "d.jsonl" + " --config " + w / "cfg.txt" + " --out " +
                       w / "x.json")
            .code == 4);
}

TEST_CASE("predict") {
  Workdir w;
  small_model(w);
  const Run ok = kpiscan(w, "predict --model " + w / "m.json" + " --series 1,2,3,4,5,6");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("  p7 DownSite ") != std::string::npos);
  const Run shortish = kpiscan(w, "predict --model " + w / "m.json" + " --series 1,2,3");
  CHECK(shortish.code == 2);
  CHECK(shortish.out.find("TooShort") != std::string::npos);
  CHECK(kpiscan(w, "predict --model " + w / "m.json" + " --series 1,2,x,4").code == 2);
  const Run flat = kpiscan(w, "predict --model " + w / "m.json" + " --series 5,5,5,5,5");
  CHECK(flat.code == 0);
  CHECK(flat.out.find("  p0 Normal ") != std::string::npos);
  write(w / "junk.json", "{\"format_version\":1}");
  CHECK(kpiscan(w, "predict --model " + w / "junk.json" + " --series 1,2,3,4").code == 5);
  CHECK(kpiscan(w, "predict --model " + w / "none.json" + " --series 1,2,3,4").code == 5);
}

TEST_CASE("eval compares checkpoints and rejects a length mismatch") {
  Workdir w;
  small_model(w);
  REQUIRE(kpiscan(w, "train --data " + w / "d.jsonl" + " --arch rcnn --epochs 1 --out " +
                         w / "r.json")
              .code == 0);
  const Run ev = kpiscan(w, "eval --model " + w / "m.json" + " --model " + w / "r.json" +
                                " --data " + w / "d.jsonl" + " --report " + w / "cmp.json");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.starts_with("Method   Accuracy  Loss      MacroRecall\n"));
  CHECK(slurp(w / "cmp.json").find("\"comparison\"") != std::string::npos);
  CHECK(slurp(w / "cmp.m.metrics.csv").starts_with("class,precision,recall,support\n"));
  CHECK(fs::exists(w / "cmp.r.metrics.csv"));

  REQUIRE(kpiscan(w, "gen --per-class 2 --len 40 --out " + w / "long.jsonl").code == 0);
  CHECK(kpiscan(w, "eval --model " + w / "m.json" + " --data " + w / "long.jsonl" + " --report " +
                       w / "x.json")
            .code == 5);
}

TEST_CASE("scan") {
  Workdir w;
  small_model(w);
  write(w / "kpi.csv",
        "cell_id,t,value\nB,0,1\nA,0,5\nB,1,2\nA,1,5\nA,2,4\nA,3,6\nA,4,5\n");
  const Run ok = kpiscan(w, "scan --model " + w / "m.json" + " --input " + w / "kpi.csv" +
                                " --out " + w / "r.csv" + " --threads 2");
  REQUIRE(ok.code == 0);
  CHECK(ok.out.starts_with("cells: 2 (classified 1, skipped 1, flagged "));
  const std::string report = slurp(w / "r.csv");
  CHECK(report.starts_with("cell_id,label,flagged,p0,p1,p2,p3,p4,p5,p6,p7,status\nA,"));
  CHECK(report.ends_with("\nB,,,,,,,,,,,skipped:too_short\n"));

  write(w / "bad.csv", "cell_id,t,value\nA,0,1\nA,1,-3\n");
  const Run bad = kpiscan(w, "scan --model " + w / "m.json" + " --input " + w / "bad.csv" +
                                 " --out " + w / "x.csv");
  CHECK(bad.code == 4);
  CHECK(bad.out.find("line 3") != std::string::npos);
  CHECK(kpiscan(w, "scan --model " + w / "m.json" + " --input " + w / "none.csv" + " --out " +
                       w / "x.csv")
            .code == 3);
}

TEST_CASE("gen-kpi labels") {
  Workdir w;
  REQUIRE(kpiscan(w, "gen-kpi --cells 16 --len 20 --out " + w / "k.csv" + " --labels " +
                         w / "l.csv")
              .code == 0);
  CHECK(lines(slurp(w / "k.csv")) == 1 + 16 * 20);
  const std::string labels = slurp(w / "l.csv");
  CHECK(labels.starts_with("cell_id,label\ncell-0000000,Normal\ncell-0000001,SuddenlyIncreasing\n"));
  CHECK(lines(labels) == 17);
}

}  // TEST_SUITE
