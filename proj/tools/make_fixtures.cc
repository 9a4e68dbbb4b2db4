// Regenerates the bundled synthetic fixtures: make_fixtures <dir>.

#include <iostream>

#include "verbknow/pipeline.h"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <dir>\n";
    return 2;
  }
  for (const auto& [role, path] : verbknow::WriteSyntheticFixtures(argv[1])) {
    std::cout << role << '\t' << path << '\n';
  }
  return 0;
}
