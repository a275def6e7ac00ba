#include <string>

#include "condensor/config.hpp"
#include "condensor/error.hpp"
#include "condensor/manifest.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace condensor;

TEST_CASE("config parsing") {
  auto cfg = Config::parse(
      "seed = 7\n"
      "# comment\n"
      "\n"
      "[dc]\n"
      "ipc = 10   # trailing\n"
      "syn_lr=0.5\n"
      "[eval]\n"
      "aug = crop,flip\n"
      "welch = true\n");
  CHECK(cfg.get_u64("seed", 0) == 7);
  CHECK(cfg.get_int("dc.ipc", 1) == 10);
  CHECK(cfg.get_double("dc.syn_lr", 0.1) == 0.5);
  CHECK(cfg.get_string("eval.aug", "none") == "crop,flip");
  CHECK(cfg.get_bool("eval.welch", false));
  CHECK(cfg.get_int("dc.outer_iters", 200) == 200);
  CHECK(cfg.resolved().at("dc.outer_iters") == "200");
  CHECK(cfg.resolved().at("dc.syn_lr") == "0.5");
  CHECK_NOTHROW(cfg.finish());
}

TEST_CASE("config errors carry line numbers") {
  auto cfg = Config::parse("[dc]\nipc = 1\nipcc = 2\n");
  cfg.get_int("dc.ipc", 1);
  try {
    cfg.finish();
    FAIL("expected unknown key");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
    CHECK(e.key() == "dc.ipcc");
    CHECK(std::string(e.what()).find("unknown key 'dc.ipcc'") != std::string::npos);
  }

  auto typed = Config::parse("\n[mtt]\niters = many\n");
  try {
    typed.get_int("mtt.iters", 1);
    FAIL("expected type error");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 3);
    CHECK(e.key() == "mtt.iters");
  }
  CHECK_THROWS_AS(Config::parse("[dc\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("just words\n"), ConfigError);
  CHECK_THROWS_WITH(Config::parse("a = 1\na = 2\n"), doctest::Contains("line 2"));
  CHECK_THROWS_AS(Config::parse("x = maybe\n").get_bool("x", false), ConfigError);
  auto empty = Config::parse("");
  CHECK_THROWS_WITH(empty.require_string("data.train"), doctest::Contains("data.train"));
}

TEST_CASE("overrides") {
  auto cfg = Config::parse("seed = 1\n");
  cfg.set("seed", "9");
  CHECK(cfg.get_u64("seed", 0) == 9);
}

TEST_CASE("git blob hash") {
  // git hash-object --stdin
  const std::string hello = "hello\n";
  CHECK(git_blob_sha1(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size())) ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1({}) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("manifest json") {
  RunManifest m;
  m.subcommand = "distill dc";
  m.seed = 42;
  m.config = {{"dc.ipc", "1"}};
  m.outputs = {{"out/syn.mdds", "abc"}};
  auto j = nlohmann::json::parse(m.to_json());
  CHECK(j["subcommand"] == "distill dc");
  CHECK(j["seed"] == 42);
  CHECK(j["config"]["dc.ipc"] == "1");
  CHECK(j["formats"]["mdds"] == 1);
  CHECK(j["engine_version"] == kEngineVersion);
}
