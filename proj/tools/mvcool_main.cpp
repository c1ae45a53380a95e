#include "mvcool/cli.hpp"

int main(int argc, char** argv) { return mvcool::cli::main_entry(argc, argv); }
