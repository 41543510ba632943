#include "gra/cli.hpp"

int main(int argc, char** argv) { return gra::cli::main(argc, argv); }
