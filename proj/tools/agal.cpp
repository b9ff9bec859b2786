#include "agal/cli.hpp"

int main(int argc, char** argv) { return agal::cli::run(argc, argv); }
