#include "iwp/cli.hpp"

int main(int argc, char** argv) { return iwp::cli::main(argc, argv); }
