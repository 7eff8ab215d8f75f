#include "cli.hpp"

int main(int argc, char** argv) { return mediation::cli::run(argc, argv); }
