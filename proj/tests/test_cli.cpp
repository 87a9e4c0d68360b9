#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

std::string work_dir() {
  static std::string dir = [] {
    std::string d = "/tmp/hepml_cli_test_" + std::to_string(getpid());
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  std::string out_path = work_dir() + "/cli.out";
  std::string cmd = std::string(HEPML_BIN) + " " + args + " > " + out_path +
                    " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_path);
  std::stringstream buf;
  buf << in.rdbuf();
  r.out = buf.str();
  return r;
}

std::string field(const std::string& text, const std::string& key) {
  auto at = text.find(key + "=");
  if (at == std::string::npos) return "";
  at += key.size() + 1;
  return text.substr(at, text.find_first_of(" \n", at) - at);
}

}  // namespace

TEST_CASE("unknown flags are usage errors with exit 2") {
  CHECK(run("generate --no-such-flag").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("missing inputs are reported as module-qualified errors") {
  auto r = run("inspect /tmp/hepml_does_not_exist.rec");
  CHECK(r.code == 1);
  CHECK(r.out.find("error:") != std::string::npos);
}

TEST_CASE("prepare splits 80/20 and inspect counts agree") {
  std::string dir = work_dir();
  CHECK(run("generate --out " + dir + "/ev.hep --events 4000 --seed 3 "
            "--separability 0.9").code == 0);
  auto prep = run("prepare --input " + dir + "/ev.hep --out " + dir +
                  "/prep --seed 4 --shards 2");
  CHECK(prep.code == 0);
  long train = std::stol(field(prep.out, "train"));
  long test = std::stol(field(prep.out, "test"));
  CHECK(train == long(0.8 * (train + test)));

  // inspect must agree with the prepare report, shard by shard
  long counted = 0;
  for (int s = 0; s < 2; ++s) {
    char name[32];
    snprintf(name, sizeof name, "/prep/train_%04d.rec", s);
    auto ins = run("inspect " + dir + name);
    CHECK(ins.code == 0);
    counted += std::stol(field(ins.out, "records"));
  }
  CHECK(counted == train);
}

TEST_CASE("config file values apply under flag precedence") {
  std::string dir = work_dir();
  std::string cfg = dir + "/gen.ini";
  {
    std::ofstream f(cfg);
    f << "[generate]\n";
    f << "events=123\n";
    f << "seed=9\n";
  }
  std::string out = dir + "/cfg.hep";
  auto defaults = run("--config " + cfg + " generate --out " + out);
  CHECK(defaults.code == 0);
  CHECK(field(defaults.out, "events") == "123");  // config beats default

  auto flagged =
      run("--config " + cfg + " generate --out " + out + " --events 77");
  CHECK(flagged.code == 0);
  CHECK(field(flagged.out, "events") == "77");  // flag beats config
}

TEST_CASE("rerunning a subcommand with the same seeds is bit-identical") {
  std::string dir = work_dir();
  CHECK(run("generate --out " + dir + "/a.hep --events 500 --seed 12").code ==
        0);
  CHECK(run("generate --out " + dir + "/b.hep --events 500 --seed 12").code ==
        0);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  CHECK(slurp(dir + "/a.hep") == slurp(dir + "/b.hep"));
}
