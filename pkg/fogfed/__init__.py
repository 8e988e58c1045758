# Empty file to make Python treat the directory as a package
