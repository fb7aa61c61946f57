#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "treeopf/cli.hpp"

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("treeopf");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("TREEOPF_LOG")) spdlog::set_level(spdlog::level::from_str(level));

  const std::vector<std::string> args(argv + 1, argv + argc);
  return treeopf::run_cli(args, std::cout, std::cerr);
}
