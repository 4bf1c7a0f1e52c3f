#include "commands.hpp"

#include "texmatch/runtime.hpp"

int main(int argc, char** argv) {
  texmatch::configure_allocator();
  return texmatch::cli::run(argc, argv);
}
