#include "commands.hpp"

int main(int argc, char** argv) { return rlsta::cli::run(argc, argv); }
