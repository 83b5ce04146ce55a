"""Ошибки анализа dynpath."""

INVALID_INPUT = 2
NOT_FOUND = 3
ESTIMATION_FAILED = 4


class DynPathError(Exception):
    """
    Ошибка, которую CLI превращает в код выхода и строку диагностики.

    Атрибуты:
        exit_code (int): Код выхода процесса
        detail (str): Сообщение для пользователя
    """

    def __init__(self, exit_code: int = INVALID_INPUT, detail: str = "") -> None:
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail

    def __str__(self) -> str:
        return self.detail
