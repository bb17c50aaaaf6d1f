#include "ctcn/toy.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic two-class blob image dataset (hem = small disk, all = large disk)."};
  std::string out = "toy";
  std::size_t hem = 130, all = 170, size = 32;
  std::uint64_t seed = 0;
  app.add_option("--out", out, "Dataset root")->capture_default_str();
  app.add_option("--hem", hem, "Images of label 0")->capture_default_str();
  app.add_option("--all", all, "Images of label 1")->capture_default_str();
  app.add_option("--size", size, "Image side in pixels")->capture_default_str();
  app.add_option("--seed", seed, "Random seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  ctcn::write_blob_dataset(out, hem, all, seed, size);
  return 0;
}
