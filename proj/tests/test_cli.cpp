#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "naf_fixtures.hpp"
#include "nsaudit/report.hpp"
#include "reference_tables.hpp"

using namespace nsaudit;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "nsaudit_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run(const std::string& args, const std::string& env = {}) {
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" NSAUDIT_CLI "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::string write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const fs::path p = scratch() / name;
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                            static_cast<std::streamsize>(bytes.size()));
  return p.string();
}

std::string write_text(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::string write_bundle(const std::string& name, const NafBundle& b) {
  const fs::path p = scratch() / name;
  write_naf(b, p);
  return p.string();
}

// W = I_2, both samples on their own class axis: every prediction is correct.
NafBundle all_correct_bundle(const std::string& name) {
  NafBundle b;
  b.model_name = name;
  b.head.weights = Matrix::Identity(2, 3);
  b.reps.representations.resize(2, 3);
  b.reps.representations << 1.0, 0.2, 0.5, 0.1, 1.0, 0.3;
  b.reps.labels = {0, 1};
  return b;
}

std::string table_fixture() {
  std::string text = "model,alpha,beta\n";
  for (std::size_t i = 0; i < reference::kOverfit.size(); ++i)
    text += "model" + std::to_string(i + 1) + "," + std::to_string(reference::kOverfit[i].alpha) + "," +
            std::to_string(reference::kOverfit[i].beta) + "\n";
  return write_text("table1.csv", text);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run("").exit_code == 1);
  CHECK(run("--help").exit_code == 0);
  CHECK(run("audit --help").exit_code == 0);
  CHECK(run("frobnicate").exit_code == 1);
  const std::string b = write_bundle("ok.naf", all_correct_bundle("ok"));
  CHECK(run("audit --input " + b + " --no-such-flag").exit_code == 1);
  CHECK(run("audit --input " + b + " --filter some").exit_code == 1);
  CHECK(run("audit --input " + b + " --format xml").exit_code == 1);
  CHECK(run("audit").exit_code == 1);
}

TEST_CASE("audit writes the documented CSV and parseable JSON") {
  const std::string b = write_bundle("ok.naf", all_correct_bundle("ok"));
  const RunResult csv = run("audit --input " + b);
  REQUIRE(csv.exit_code == 0);
  CHECK(csv.out.rfind("model,alpha,beta,O,softmax_true,logit_true,n_used\n", 0) == 0);
  const auto reports = read_audit_reports_csv(csv.out);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].model_name == "ok");
  CHECK(reports[0].n_used == 2);
  CHECK(contains(csv.err, "rank 1: ok"));

  const RunResult json = run("audit --format json --input " + b);
  REQUIRE(json.exit_code == 0);
  const auto from_json = read_audit_reports_json(json.out);
  REQUIRE(from_json.size() == 1);
  CHECK(std::abs(from_json[0].score_O - reports[0].score_O) < 5e-5);

  const std::string out = (scratch() / "report.csv").string();
  const RunResult to_file = run("audit --input " + b + " --out " + out);
  CHECK(to_file.exit_code == 0);
  CHECK(slurp(out) == csv.out);
  CHECK(contains(to_file.out, "rank 1: ok"));
}

TEST_CASE("audit error paths") {
  const RunResult missing = run("audit --input " + (scratch() / "missing.naf").string());
  CHECK(missing.exit_code == 2);
  CHECK(contains(missing.err, "missing.naf"));

  auto bytes = encode_naf(all_correct_bundle("bad"));
  bytes[bytes.size() / 2] ^= 0x10;
  const std::string corrupt = write_bytes("corrupt.naf", bytes);
  const RunResult bad = run("audit --input " + corrupt);
  CHECK(bad.exit_code == 1);
  CHECK(contains(bad.err, "corrupt.naf"));
  CHECK(contains(bad.err, "checksum mismatch"));

  const std::string good = write_bundle("good.naf", all_correct_bundle("good"));
  const RunResult filtered = run("audit --filter misclassified --input " + good);
  CHECK(filtered.exit_code == 1);
  CHECK(contains(filtered.err, "no samples after filter"));

  NafBundle zero = all_correct_bundle("zero");
  zero.reps.representations.row(1).setZero();
  const RunResult zr = run("audit --input " + write_bundle("zero.naf", zero));
  CHECK(zr.exit_code == 1);
  CHECK(contains(zr.err, "zero.naf"));
  CHECK(contains(zr.err, "sample 1"));

  CHECK(run("audit --input " + good + " --out /nonexistent_dir/x.csv").exit_code == 2);
  CHECK(run("audit --rank-tol -1 --input " + good).exit_code == 1);
  CHECK(run("audit --rank-tol abc --input " + good).exit_code == 1);
  CHECK(run("audit --input " + good, "NSAUDIT_RANK_TOL=nope").exit_code == 1);
  CHECK(run("audit --rank-tol 1e-8 --input " + good).exit_code == 0);
  CHECK(run("audit --input " + good, "NSAUDIT_RANK_TOL=1e-8").exit_code == 0);

  const std::string bad_fixture = write_text("bad_fixture.csv", "model,alpha,beta\nm,abc,1\n");
  const RunResult bf = run("audit --means-fixture " + bad_fixture);
  CHECK(bf.exit_code == 1);
  CHECK(contains(bf.err, "bad fixture value"));
}

TEST_CASE("fixture replay reproduces both published tables") {
  const std::string fixture = table_fixture();
  const RunResult audit = run("audit --means-fixture " + fixture);
  REQUIRE(audit.exit_code == 0);
  const auto reports = read_audit_reports_csv(audit.out);
  REQUIRE(reports.size() == 11);
  for (std::size_t i = 0; i < 11; ++i) CHECK(std::abs(reports[i].score_O - reference::kOverfit[i].O) <= 0.02);

  const RunResult cohort = run("cohort --format json --means-fixture " + fixture);
  REQUIRE(cohort.exit_code == 0);
  const CohortReport c = read_cohort_report_json(cohort.out);
  REQUIRE(c.cohort_size() == 11);
  for (std::size_t i = 0; i < 11; ++i) {
    CHECK(std::abs(c.entries[i].alpha_prime - reference::kGeneralization[i].alpha_prime) <= 0.001);
    CHECK(std::abs(c.entries[i].beta_prime - reference::kGeneralization[i].beta_prime) <= 0.001);
    CHECK(std::abs(c.entries[i].score_G - reference::kGeneralization[i].G) <= 0.001);
  }
  CHECK(contains(cohort.err, "rank 1: model1 G=1.7563"));

  const RunResult rank = run("rank --means-fixture " + fixture);
  REQUIRE(rank.exit_code == 0);
  CHECK(rank.out.rfind("rank_O,model,O,G,rank_G\n1,model1,32.3300,1.7563,1\n", 0) == 0);
  CHECK(contains(rank.out, "\n11,model2,67.2700,1.4234,11\n"));
}

TEST_CASE("cohort: size one is an error, identical bundles score 2") {
  const std::string a = write_bundle("same_a.naf", all_correct_bundle("a"));
  const std::string b = write_bundle("same_b.naf", all_correct_bundle("b"));
  const RunResult one = run("cohort --input " + a);
  CHECK(one.exit_code == 1);
  CHECK(contains(one.err, "at least 2"));

  const RunResult two = run("cohort --input " + a + " --input " + b);
  REQUIRE(two.exit_code == 0);
  const CohortReport c = read_cohort_report_csv(two.out);
  REQUIRE(c.cohort_size() == 2);
  CHECK(c.entries[0].score_G == 2.0);
  CHECK(c.entries[1].score_G == 2.0);
  CHECK(c.entries[0].model_name == "a");

  const RunResult rank = run("rank --input " + b + " --input " + a);
  REQUIRE(rank.exit_code == 0);
  CHECK(rank.out.rfind("rank_O,model,O,G,rank_G\n1,a,", 0) == 0);
}

TEST_CASE("inspect prints the header and rejects corruption") {
  const std::string minimal = write_bytes("minimal.naf", fixtures::minimal_file_bytes());
  const RunResult ok = run("inspect --input " + minimal);
  REQUIRE(ok.exit_code == 0);
  CHECK(ok.out.rfind("C=2 d=3 n=1 dtype=f64 bias=no\nname=m\n", 0) == 0);

  auto bytes = fixtures::minimal_file_bytes();
  bytes[bytes.size() - 10] ^= 0x01;
  const std::string bad = write_bytes("bad_crc.naf", bytes);
  const RunResult corrupt = run("inspect --input " + bad);
  CHECK(corrupt.exit_code == 1);
  CHECK(contains(corrupt.err, "checksum mismatch"));
  // header-only mode does not look at the payload
  CHECK(run("inspect --quick --input " + bad).exit_code == 0);

  NafBundle meta = all_correct_bundle("with-meta");
  meta.head.bias = Vector::Zero(2);
  meta.dtype = StorageType::Float32;
  meta.metadata = {{"dataset", "blobs"}};
  const RunResult m = run("inspect --input " + write_bundle("meta.naf", meta));
  CHECK(m.out == "C=2 d=3 n=2 dtype=f32 bias=yes\nname=with-meta\nmeta.dataset=blobs\n");

  CHECK(run("inspect --input " + (scratch() / "nope.naf").string()).exit_code == 2);
}

TEST_CASE("inspect --quick on a 1 GB bundle reads only the header") {
  // C=2, d=1000, n=268000, float32: payload just over 1 GB, left sparse
  const std::uint64_t c = 2, d = 1000, n = 268500;
  std::vector<std::uint8_t> header = {'N', 'A', 'F', '1'};
  fixtures::append_u32(header, 1);
  fixtures::append_u32(header, 0);
  for (int i = 0; i < 8; ++i) header.push_back(0);
  fixtures::append_u64(header, c);
  fixtures::append_u64(header, d);
  fixtures::append_u64(header, n);
  fixtures::append_u32(header, 3);
  for (char ch : std::string("big")) header.push_back(static_cast<std::uint8_t>(ch));
  fixtures::append_u32(header, 0);
  const std::uint64_t total = header.size() + 4 * (c * d + n * d) + 4 * n + 4;
  REQUIRE(total > (1ull << 30));
  const fs::path big = scratch() / "big.naf";
  write_bytes("big.naf", header);
  fs::resize_file(big, total);

  const auto start = std::chrono::steady_clock::now();
  const RunResult r = run("inspect --quick --input " + big.string());
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("inspect --quick on " << total << " bytes: " << ms << " ms");
  CHECK(r.exit_code == 0);
  CHECK(r.out.rfind("C=2 d=1000 n=268500 dtype=f32 bias=no\nname=big\n", 0) == 0);
  CHECK(ms < 100.0);
  fs::remove(big);
}

TEST_CASE("toy-train: the overfit recipe out-ranks its early-stopped twin on O") {
  const fs::path dir = scratch() / "train";
  const RunResult t = run(std::string("toy-train --sweep " NSAUDIT_SWEEP_CONFIG " --model early_stopped --model overfit --out ") +
                          dir.string());
  REQUIRE(t.exit_code == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  const std::string a = (dir / "early_stopped.naf").string(), b = (dir / "overfit.naf").string();
  const RunResult audit = run("audit --input " + b + " --input " + a);
  REQUIRE(audit.exit_code == 0);
  const auto reports = read_audit_reports_csv(audit.out);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].model_name == "overfit");  // input order
  CHECK(reports[1].score_O < reports[0].score_O);
  CHECK(contains(audit.err, "rank 1: early_stopped"));

  const RunResult rank = run("rank --input " + b + " --input " + a);
  CHECK(rank.out.rfind("rank_O,model,O,G,rank_G\n1,early_stopped,", 0) == 0);

  const RunResult unknown =
      run(std::string("toy-train --sweep " NSAUDIT_SWEEP_CONFIG " --model nope --out ") + dir.string());
  CHECK(unknown.exit_code == 1);
}

TEST_CASE("toy-bench is deterministic and handles degenerate sweeps") {
  const std::string d1 = (scratch() / "bench1").string(), d2 = (scratch() / "bench2").string();
  const RunResult r1 = run(std::string("toy-bench --sweep " NSAUDIT_SWEEP_CONFIG " --seeds 1 --out ") + d1);
  const RunResult r2 = run(std::string("toy-bench --sweep " NSAUDIT_SWEEP_CONFIG " --seeds 1 --jobs 2 --out ") + d2);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  const std::string s1 = slurp(fs::path(d1) / "summary.csv");
  CHECK(s1.rfind("seed,model,O,G,clean_acc,corruption_acc\n", 0) == 0);
  CHECK(s1 == slurp(fs::path(d2) / "summary.csv"));
  CHECK(slurp(fs::path(d1) / "seed0" / "overfit.naf") == slurp(fs::path(d2) / "seed0" / "overfit.naf"));
  CHECK(contains(r1.out, "median spearman(G, corruption_acc)="));
  CHECK(read_audit_reports_csv(slurp(fs::path(d1) / "audit_seed0.csv")).size() == 11);

  const std::string solo = write_text(
      "solo.json", R"({"blobs": {"classes": 3, "input_dim": 4, "train_pool_per_class": 10, "test_per_class": 5},
                       "models": [{"name": "solo", "epochs": 3, "hidden_units": 16}]})");
  const std::string d3 = (scratch() / "bench_solo").string();
  const RunResult one = run("toy-bench --sweep " + solo + " --seeds 1 --out " + d3);
  CHECK(one.exit_code == 0);
  CHECK(contains(one.err, "cohort step skipped"));
  CHECK(read_audit_reports_csv(slurp(fs::path(d3) / "audit_seed0.csv")).size() == 1);

  const std::string boom = write_text(
      "boom.json", R"({"blobs": {"classes": 3, "input_dim": 4, "train_pool_per_class": 10, "test_per_class": 5},
                       "models": [{"name": "boom", "epochs": 5, "learning_rate": 1e300}]})");
  const RunResult div = run("toy-bench --sweep " + boom + " --seeds 1 --out " + d3);
  CHECK(div.exit_code == 1);
  CHECK(contains(div.err, "boom"));

  CHECK(run("toy-bench --sweep " + write_text("broken.json", "{") + " --out " + d3).exit_code == 1);
  CHECK(run("toy-bench --sweep /nonexistent.json --out " + d3).exit_code == 2);
  CHECK(run("toy-bench --sweep " + solo + " --seeds 0 --out " + d3).exit_code == 1);
}

}  // TEST_SUITE
