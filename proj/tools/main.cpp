#include "cli.hpp"

int main(int argc, char** argv) { return neurules::cli::run(argc, argv); }
