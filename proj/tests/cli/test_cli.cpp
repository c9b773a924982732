#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Run run(const std::string& args) {
  const std::string cmd = std::string("\"") + MNAR_CLI_PATH + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("mnar_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write(const std::string& name, const std::string& text) {
  const fs::path p = workdir() / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(fields);
  }
  return rows;
}

double num(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  REQUIRE(res.ec == std::errc());
  return v;
}

const char* kSmall =
    "a,b,c\n"
    "1,2,3\n"
    "2,4,6\n"
    "3,6,NA\n"
    "4,8,12\n";

}  // namespace

TEST_CASE("cli/version") {
  const Run r = run("version");
  CHECK(r.status == 0);
  CHECK(r.out.find('.') != std::string::npos);
}

TEST_CASE("cli/unknown config key names the key") {
  const fs::path cfg = write("bad.cfg", "schema_version = 1\npreset = univariate\nwibble = 3\n");
  const Run r = run("simulate --config \"" + cfg.string() + "\" --output \"" + (workdir() / "bad").string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("wibble") != std::string::npos);
  CHECK(r.out.find(":3:") != std::string::npos);
}

TEST_CASE("cli/config errors") {
  const fs::path dup = write("dup.cfg", "schema_version = 1\nn = 10\nn = 20\n");
  Run r = run("simulate --config \"" + dup.string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("dup.cfg:3") != std::string::npos);
  const fs::path ver = write("ver.cfg", "schema_version = 2\n");
  r = run("simulate --config \"" + ver.string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("schema_version") != std::string::npos);
}

TEST_CASE("cli/smoke campaign and reproducibility") {
  const std::string body =
      "schema_version = 1\n"
      "# one replication of the univariate setting\n"
      "preset = univariate\n"
      "name = smoke\n"
      "replications = 1\n"
      "grid_size = 3\n"
      "mcem_ns = 20\n"
      "mcem_max_iters = 3\n";
  const fs::path cfg = write("smoke.cfg", body);
  const fs::path a = workdir() / "smoke_a";
  const fs::path b = workdir() / "smoke_b";
  Run r = run("simulate --config \"" + cfg.string() + "\" --output \"" + a.string() + "\"");
  REQUIRE(r.status == 0);
  r = run("simulate --config \"" + cfg.string() + "\" --output \"" + b.string() + "\"");
  REQUIRE(r.status == 0);

  const std::string csv = slurp(a.string() + ".csv");
  CHECK(csv.rfind("# schema_version = 1\n", 0) == 0);
  CHECK(csv.find("# replications = 1\n") != std::string::npos);
  const auto rows = parse_csv(csv);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0][0] == "method");
  CHECK(rows[0][5] == "wall_time_s");
  const auto rows_b = parse_csv(slurp(b.string() + ".csv"));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    CHECK(rows[k][7].empty());
    for (std::size_t c = 0; c < rows[k].size(); ++c)
      if (c != 5) CHECK(rows[k][c] == rows_b[k][c]);
  }

  const auto json = nlohmann::json::parse(slurp(a.string() + ".json"));
  CHECK(json["schema"] == "mnar-campaign-summary/1");
  CHECK(json["methods"].size() == 6);
  CHECK(json["config"]["name"] == "smoke");
  CHECK(json["failures"].empty());
  const auto json_b = nlohmann::json::parse(slurp(b.string() + ".json"));
  CHECK(json["methods"] == json_b["methods"]);
  CHECK(json["missing_rates"] == json_b["missing_rates"]);
}

TEST_CASE("cli/impute matches the rank-one completion") {
  const fs::path in = write("small.csv", kSmall);
  const fs::path out = workdir() / "small_out.csv";
  const Run r = run("impute --input \"" + in.string() + "\" --output \"" + out.string() +
                    "\" --method MAR_FISTA --lambda 0.001 --max-iters 20000");
  REQUIRE(r.status == 0);
  const auto rows = parse_csv(slurp(out));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"a", "b", "c"});
  CHECK(rows[1] == std::vector<std::string>{"1", "2", "3"});
  CHECK(num(rows[3][2]) == doctest::Approx(9.0).epsilon(0.05));
  const auto side = nlohmann::json::parse(slurp(out.string() + ".json"));
  CHECK(side["schema"] == "mnar-impute/1");
  CHECK(side["method"] == "MAR_FISTA");
  CHECK(side["lambda"] == 0.001);
  CHECK(side["missing_cells"] == 1);
}

TEST_CASE("cli/mean imputation gives constant columns") {
  const fs::path in = write("mean.csv", kSmall);
  const fs::path out = workdir() / "mean_out.csv";
  REQUIRE(run("impute --input \"" + in.string() + "\" --output \"" + out.string() + "\" --method MEAN_IMPUTE").status ==
          0);
  const auto rows = parse_csv(slurp(out));
  for (std::size_t k = 2; k < rows.size(); ++k) CHECK(rows[k] == rows[1]);
  CHECK(num(rows[1][2]) == doctest::Approx(7.0));
}

TEST_CASE("cli/values round trip at full precision") {
  const std::string text =
      "x,y\n"
      "0.1234567890123,1e-7\n"
      "-3.14159265358979,NA\n"
      "2.5,6.02214076e23\n";
  const fs::path in = write("prec.csv", text);
  const fs::path out = workdir() / "prec_out.csv";
  REQUIRE(run("impute --input \"" + in.string() + "\" --output \"" + out.string() + "\" --lambda 0.5").status == 0);
  const auto rows = parse_csv(slurp(out));
  CHECK(num(rows[1][0]) == 0.1234567890123);
  CHECK(num(rows[1][1]) == 1e-7);
  CHECK(num(rows[2][0]) == -3.14159265358979);
  CHECK(num(rows[3][1]) == 6.02214076e23);
}

TEST_CASE("cli/model-based imputation is byte reproducible") {
  std::string text = "a,b,c,d\n";
  for (int i = 0; i < 30; ++i) {
    const double t = (i % 7) - 3.0;
    text += std::to_string(t) + "," + (i % 3 == 0 && t > 0 ? std::string("NA") : std::to_string(2 * t + 0.1 * (i % 5))) +
            "," + std::to_string(-t + 0.05 * i) + "," + std::to_string(0.5 * t) + "\n";
  }
  const fs::path in = write("mcem.csv", text);
  const std::string common = "impute --input \"" + in.string() +
                             "\" --method MODEL_MCEM --sigma 0.8 --lambda 2 --ns 40 --seed 7 --output ";
  REQUIRE(run(common + "\"" + (workdir() / "m1.csv").string() + "\"").status == 0);
  REQUIRE(run(common + "\"" + (workdir() / "m2.csv").string() + "\" --threads 2").status == 0);
  CHECK(slurp(workdir() / "m1.csv") == slurp(workdir() / "m2.csv"));
  const auto a = nlohmann::json::parse(slurp(workdir() / "m1.csv.json"));
  CHECK(a["phi"].size() == 1);
  CHECK(a["phi"][0]["column"] == "b");
  CHECK(a["sigma2"].get<double>() == doctest::Approx(0.64));
}

TEST_CASE("cli/model-based methods need a noise level") {
  const fs::path in = write("nosigma.csv", kSmall);
  const Run r = run("impute --input \"" + in.string() + "\" --output \"" + (workdir() / "x.csv").string() +
                    "\" --method MODEL_MCEM --lambda 1");
  CHECK(r.status != 0);
  CHECK(r.out.find("sigma") != std::string::npos);
}

TEST_CASE("cli/malformed input is reported") {
  const fs::path ragged = write("ragged.csv", "a,b\n1,2\n3\n");
  Run r = run("impute --input \"" + ragged.string() + "\" --output \"" + (workdir() / "r.csv").string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("data row 2 has 1 fields, expected 2") != std::string::npos);
  const fs::path text = write("text.csv", "a,b\n1,2\n3,abc\n");
  r = run("impute --input \"" + text.string() + "\" --output \"" + (workdir() / "t.csv").string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("'b'") != std::string::npos);
  CHECK(r.out.find("not numeric") != std::string::npos);
  const fs::path empty_col = write("empty.csv", "a,b\n1,NA\n3,NA\n");
  r = run("impute --input \"" + empty_col.string() + "\" --output \"" + (workdir() / "e.csv").string() + "\"");
  CHECK(r.status != 0);
  CHECK(r.out.find("b") != std::string::npos);
}

TEST_CASE("cli/grid sweep") {
  const fs::path in = write("grid.csv", kSmall);
  const fs::path out = workdir() / "grid_out.csv";
  const Run r = run("grid --input \"" + in.string() + "\" --grid-size 4 --holdout 0.3 --output \"" + out.string() + "\"");
  REQUIRE(r.status == 0);
  const auto rows = parse_csv(slurp(out));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][0] == "lambda");
  CHECK(num(rows[1][0]) > num(rows[4][0]));
}
