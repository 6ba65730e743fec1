#include "nsnmf/cli.hpp"

int main(int argc, char** argv) {
  return nsnmf::cli::parse_and_dispatch(argc, argv, std::cin, std::cout, std::cerr);
}
