"""PersonaPKT: persona-specific prefixes on a frozen desk-scale transformer."""
