#include "eotsieve/cli.hpp"

int main(int argc, char** argv) { return eotsieve::cli_main(argc, argv); }
