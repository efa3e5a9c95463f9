#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "ssd/config.hpp"
#include "support.hpp"

using namespace ssd;

TEST_CASE("config text round trip") {
  RunConfig c;
  c.set("alpha", "0.5");
  c.set("n", "2000");
  c.set("label", "toy run");
  const auto text = c.to_text();
  CHECK(text.rfind("schema=1\n", 0) == 0);
  const auto back = RunConfig::parse(text);
  CHECK(back.values() == c.values());
  CHECK(back.get_double("alpha", 0) == 0.5);
  CHECK(back.get_u64("n", 0) == 2000);
  CHECK(back.get_or("missing", "x") == "x");
  CHECK_THROWS_AS(back.get("missing"), Error);

  const auto path = test::scratch("run_config.txt");
  c.save(path);
  CHECK(RunConfig::load(path).values() == c.values());
}

TEST_CASE("config parse errors") {
  CHECK_THROWS_AS(RunConfig::parse("alpha=0.5\n"), Error);
  CHECK_THROWS_AS(RunConfig::parse("schema=2\nalpha=0.5\n"), Error);
  CHECK_THROWS_AS(RunConfig::parse("schema=1\nalpha=0.5\nalpha=0.6\n"), Error);
  CHECK_THROWS_AS(RunConfig::parse("schema=1\nnot a pair\n"), Error);
  CHECK_NOTHROW(RunConfig::parse("# comment\nschema=1\n\nalpha=0.5\n"));
  const auto c = RunConfig::parse("schema=1\nn=abc\n");
  CHECK_THROWS_AS(c.get_u64("n", 0), Error);
}

TEST_CASE("manifest") {
  const auto in = test::scratch("manifest_input.bin");
  {
    std::ofstream out(in, std::ios::binary);
    out << "abc";
  }
  CHECK(file_digest(in) == "e71fa2190541574b");  // FNV-1a 64 of "abc"
  RunManifest m;
  m.command = "certify";
  m.config.set("n", "10");
  m.inputs.push_back({"components", in, file_digest(in)});
  m.outputs.push_back("certify_report.txt");
  m.version = version();
  const auto j = nlohmann::json::parse(m.to_json());
  CHECK(j["command"] == "certify");
  CHECK(j["inputs"][0]["digest"] == "e71fa2190541574b");
  CHECK(j["outputs"][0] == "certify_report.txt");
  CHECK(j["config"]["n"] == "10");
  CHECK_THROWS_AS(file_digest(test::scratch("does_not_exist")), Error);
}
