// Regenerates the bundled toy datasets under data/.
#include "esapo/core.hpp"
#include "esapo/toy.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir);
  esapo::write_corpus(dir / "toy_corpus.jsonl", esapo::toy::make_corpus(500, 1));
  esapo::write_corpus(dir / "toy_heldout.jsonl", esapo::toy::make_corpus(100, 2));
  esapo::write_mcq_dataset(dir / "toy_mcq.jsonl", esapo::toy::make_mcq(300, 3, 0.4));
  std::cout << "wrote fixtures to " << dir << "\n";
  return 0;
}
