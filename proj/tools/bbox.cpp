#include "cli.hpp"

int main(int argc, char** argv) { return bbox::cli::main(argc, argv); }
