import typing as typ


def format_rows(rows: list[tuple[typ.Any, ...]], column_names: typ.Sequence[str]) -> str:
    """Lays rows out in a plain-text table.

    :param rows: List of rows.
    :param column_names: Names of each column.
    :return: The table, one line per row after the header and separator lines.
    """
    columns = list(zip(*([tuple(column_names)] + rows)))
    column_sizes = [max([len(str(v)) for v in col]) for col in columns]
    lines = [' | '.join(str(v).ljust(column_sizes[i]) for i, v in enumerate(column_names)),
             '-+-'.join('-' * size for size in column_sizes)]
    for row in rows:
        lines.append(' | '.join(str(v).ljust(column_sizes[i]) for i, v in enumerate(row)))
    return '\n'.join(lines)


def print_rows(rows: list[tuple[typ.Any, ...]], column_names: typ.Sequence[str]):
    """Prints rows in a table.

    :param rows: List of rows.
    :param column_names: Names of each column.
    """
    print(format_rows(rows, column_names))
