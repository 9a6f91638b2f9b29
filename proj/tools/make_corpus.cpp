// Writes the synthetic evaluation corpus as PGM files.
#include <filesystem>
#include <iostream>
#include <string>

#include "curvemark/pgm.hpp"
#include "curvemark/synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_corpus OUTPUT_DIR\n";
    return 64;
  }
  const std::filesystem::path dir = argv[1];
  try {
    std::filesystem::create_directories(dir);
    for (const auto& e : curvemark::synthetic::default_corpus()) {
      curvemark::save_pgm((dir / e.name).string(), e.image);
      std::cout << (dir / e.name).string() << " " << e.image.cols() << "x" << e.image.rows() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "make_corpus: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
