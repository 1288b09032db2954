#include <CLI11.hpp>

#include <iostream>

#include "saldrn/errors.hpp"
#include "saldrn/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a procedural overhead-imagery corpus with train/ and test/ splits"};
  std::string root;
  int n_train = 20, n_test = 5, size = 192;
  std::uint64_t seed = 1;
  app.add_option("root", root, "Output directory")->required();
  app.add_option("--train", n_train, "Training images")->check(CLI::PositiveNumber);
  app.add_option("--test", n_test, "Held-out images")->check(CLI::PositiveNumber);
  app.add_option("--size", size, "Side length in pixels")->check(CLI::Range(48, 4096));
  app.add_option("--seed", seed, "Scene seed");
  CLI11_PARSE(app, argc, argv);
  try {
    saldrn::write_toy_corpus(root, n_train, n_test, size, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
