#include "splr/cli.hpp"

int main(int argc, char** argv) { return splr::cli::run_cli(argc, argv); }
