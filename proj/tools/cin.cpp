#include "cli.hpp"

int main(int argc, char** argv) { return cin::cli::run(argc, argv); }
