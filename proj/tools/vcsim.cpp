#include "vcsim/cli.hpp"

int main(int argc, char** argv) { return vcsim::cli::run(argc, argv); }
