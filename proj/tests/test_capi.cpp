#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <rotapol.h>

#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("rotapol_capi_") + name);
  fs::remove_all(p);
  return p;
}

std::string derive_config(const fs::path& out) {
  json cfg;
  cfg["scenario"] = "derive";
  cfg["output"] = {{"directory", out.string()}};
  cfg["medium"] = {{"coupling_gsqrt_n", 3.0e7}, {"rabi_plus", 1.0e5}, {"gamma", 1.0e7},
                   {"probe_wavelength", 1.0e-6}};
  cfg["geometry"] = {{"nu", 628.3}, {"radius", 0.01}, {"medium_length", 0.1}};
  return cfg.dump();
}

}  // namespace

TEST_CASE("version string is present") {
  REQUIRE(rp_version() != nullptr);
  CHECK(std::strlen(rp_version()) > 0);
}

TEST_CASE("scenario runs from config text") {
  const fs::path dir = fresh_dir("text");
  rp_run* run = nullptr;
  char* err = nullptr;
  const int status =
      rp_run_scenario_text(derive_config(dir).c_str(), nullptr, 0, 0, &run, &err);
  REQUIRE(status == 0);
  REQUIRE(run != nullptr);
  CHECK(err == nullptr);

  CHECK(std::string(rp_run_scenario_name(run)) == "derive");
  CHECK(fs::path(rp_run_output_dir(run)) == dir);
  CHECK(std::string(rp_run_summary(run)).rfind("derive:", 0) == 0);

  REQUIRE(rp_run_artifact_count(run) == 1);
  CHECK(std::string(rp_run_artifact_name(run, 0)) == "derived.json");
  CHECK(rp_run_artifact_bytes(run, 0) == fs::file_size(dir / "derived.json"));
  const char* hash = rp_run_artifact_hash(run, 0);
  REQUIRE(hash != nullptr);
  REQUIRE(std::strlen(hash) == 16);
  for (const char* c = hash; *c; ++c) CHECK(std::isxdigit(static_cast<unsigned char>(*c)));

  // out of range access stays defined
  CHECK(rp_run_artifact_name(run, 99) == nullptr);
  CHECK(rp_run_artifact_hash(run, 99) == nullptr);
  CHECK(rp_run_artifact_bytes(run, 99) == 0);

  rp_run_free(run);
}

TEST_CASE("scenario runs from a config file with an output override") {
  const fs::path dir = fresh_dir("file");
  const fs::path cfg_dir = fresh_dir("filecfg");
  fs::create_directories(cfg_dir);
  const fs::path cfg_path = cfg_dir / "derive.json";
  {
    json cfg = json::parse(derive_config(dir));
    cfg.erase("output");
    std::ofstream(cfg_path) << cfg.dump();
  }

  rp_run* run = nullptr;
  char* err = nullptr;
  const int status =
      rp_run_scenario(cfg_path.string().c_str(), dir.string().c_str(), 1, 0, &run, &err);
  REQUIRE(status == 0);
  REQUIRE(run != nullptr);
  CHECK(fs::path(rp_run_output_dir(run)) == dir);
  CHECK(fs::exists(dir / "manifest.json"));
  rp_run_free(run);
}

TEST_CASE("config errors map to exit code two") {
  rp_run* run = nullptr;
  char* err = nullptr;
  const int status = rp_run_scenario_text("{\"scenario\":\"warp\"}", nullptr, 0, 0, &run, &err);
  CHECK(status == 2);
  CHECK(run == nullptr);
  REQUIRE(err != nullptr);
  CHECK(std::string(err).find("ConfigInvalid") != std::string::npos);
  rp_string_free(err);
}

TEST_CASE("missing config files map to exit code four") {
  rp_run* run = nullptr;
  char* err = nullptr;
  const int status =
      rp_run_scenario("/nonexistent/rotapol.json", nullptr, 0, 0, &run, &err);
  CHECK(status == 4);
  CHECK(run == nullptr);
  REQUIRE(err != nullptr);
  CHECK(std::string(err).find("IoError") != std::string::npos);
  rp_string_free(err);
}

TEST_CASE("numerics failures map to exit code three") {
  const fs::path dir = fresh_dir("numfail");
  json cfg;
  cfg["scenario"] = "landau";
  cfg["output"] = {{"directory", dir.string()}};
  cfg["model"] = {{"omega_rot", 1.0}};
  cfg["numerics"] = {{"grid", {{"nx", 16}, {"ny", 16}, {"extent_x", 10.0}, {"extent_y", 10.0}}},
                     {"eigen", {{"k", 4}, {"max_applies", 4}}}};

  rp_run* run = nullptr;
  char* err = nullptr;
  const int status = rp_run_scenario_text(cfg.dump().c_str(), nullptr, 0, 0, &run, &err);
  CHECK(status == 3);
  CHECK(run == nullptr);
  REQUIRE(err != nullptr);
  CHECK(std::string(err).find("NoConvergence") != std::string::npos);
  rp_string_free(err);
  CHECK(fs::exists(dir / "error.json"));
}

TEST_CASE("null arguments are rejected without crashing") {
  rp_run* run = nullptr;
  char* err = nullptr;
  CHECK(rp_run_scenario_text(nullptr, nullptr, 0, 0, &run, &err) == 2);
  CHECK(run == nullptr);
  if (err != nullptr) rp_string_free(err);
  CHECK(rp_run_scenario(nullptr, nullptr, 0, 0, &run, nullptr) == 2);
  rp_run_free(nullptr);
  rp_string_free(nullptr);
}
