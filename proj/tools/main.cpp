#include "cli.hpp"

int main(int argc, char** argv) { return funvar::cli::run(argc, argv); }
