#include "hybridsentry/cli.hpp"

int main(int argc, char** argv) { return hybridsentry::cli::run(argc, argv); }
