#include <iostream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "archshape/cli.hpp"

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Reuse large activation buffers across batches.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  const std::vector<std::string> args(argv + 1, argv + argc);
  return archshape::cli::run(args, std::cout, std::cerr);
}
