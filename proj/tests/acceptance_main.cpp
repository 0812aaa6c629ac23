// Runs every shipped acceptance config and prints one verdict line per
// criterion. The config directory comes from the build definition
// HIGHWAY_CONFIG_DIR and can be overridden by the first argument.

#include <cstdio>
#include <exception>
#include <string>

#include <highway/highway.hpp>

#ifndef HIGHWAY_CONFIG_DIR
#define HIGHWAY_CONFIG_DIR "configs/acceptance"
#endif

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : HIGHWAY_CONFIG_DIR;
  int failures = 0;
  for (int i = 1; i <= 12; ++i) {
    char name[8];
    std::snprintf(name, sizeof(name), "c%02d", i);
    const std::string path = dir + "/" + name + ".json";
    try {
      const highway::ExperimentConfig cfg = highway::load_config(path);
      if (cfg.check != name) throw std::invalid_argument(path + ": check id mismatch");
      const highway::CheckResult res = highway::run_check(cfg);
      std::printf("[%s] %s: %s\n", res.pass ? "PASS" : "FAIL", res.id.c_str(),
                  res.detail.c_str());
      std::fflush(stdout);
      if (!res.pass) ++failures;
    } catch (const std::exception& e) {
      std::printf("[FAIL] %s: %s\n", name, e.what());
      std::fflush(stdout);
      ++failures;
    }
  }
  if (failures == 0) {
    std::printf("all 12 acceptance criteria hold\n");
    return 0;
  }
  std::printf("%d acceptance criteria failed\n", failures);
  return 1;
}
