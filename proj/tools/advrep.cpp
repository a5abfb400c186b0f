#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "advrep/error.hpp"
#include "advrep/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"advrep: adversarial representation pipeline"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "synth|train|attribute|embed|score|leiden|stratify|report")->required();
  app.add_option("--config", config_path, "JSON config")->required();
  app.add_option("--out", out_dir, "run directory")->required();
  app.add_option("--seed", seed, "overrides the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const advrep::Stage stage = advrep::parse_stage(command);
    const advrep::PipelineConfig config = advrep::load_pipeline_config(config_path, seed);
    advrep::run_stage(stage, config, out_dir);
  } catch (const advrep::MissingArtifactError& e) {
    std::cerr << "advrep: " << e.what() << '\n';
    return 3;
  } catch (const advrep::NumericalError& e) {
    std::cerr << "advrep: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const advrep::Error& e) {
    std::cerr << "advrep: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "advrep: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
