"""Small helper library."""


def slugify(text: str) -> str:
    return "-".join(part for part in text.lower().split() if part)
